//! Parsing traces and estimating the two mobility models: cell handovers
//! with mean sojourns, and pairwise contact rates.

use mobcache::mobility::{
    estimate_contact_model, estimate_transition_model, parse_association_trace, parse_contact_trace,
};

const ASSOC: &str = "\
user_id,cell_id,enter_s,exit_s
0,0,0,30
0,1,30,50
0,0,50,100
1,1,0,40
1,2,40,45
1,1,45,90
";

const CONTACTS: &str = "\
user_a,user_b,start_s,end_s
0,1,10,12
0,1,200,201
1,2,50,53
0,1,400,405
";

fn main() -> mobcache::Result<()> {
    let assoc = parse_association_trace(ASSOC)?;
    let cells = estimate_transition_model(&assoc, None)?;
    print!("{}", cells.transition_csv());
    print!("{}", cells.cells_csv());

    let contacts = parse_contact_trace(CONTACTS)?;
    // Rates are contact counts over the observation window.
    let rates = estimate_contact_model(&contacts, 600.0)?;
    print!("{}", rates.to_csv());

    // Malformed input reports the offending line.
    match parse_association_trace("0,0,10,5\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
