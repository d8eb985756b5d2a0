//! Command-line surface for the two-locus sampling distribution library:
//! argument parsing helpers, output emitters, and the command drivers.

pub mod emit;
pub mod run;
pub mod spec;

use twolocus::error::Error;

/// Process exit code for an error: 2 for bad input, 3 for exceeded capacity
/// budgets, 4 for numeric failure or degeneracy.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Capacity(_) => 3,
        Error::Singular(_)
        | Error::DegeneratePade { .. }
        | Error::Pole { .. }
        | Error::NonConvergence(_)
        | Error::Domain(_) => 4,
        _ => 2,
    }
}
