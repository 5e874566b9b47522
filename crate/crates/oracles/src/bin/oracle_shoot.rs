//! Adaptive-RK shooting oracle for the ground-state height and mass.
//!
//! Usage: oracle-shoot [golden.json]

use std::path::PathBuf;

use nls_oracles::{dp45, golden};

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("golden/constants.json"));
    let rtol = 1e-13;
    let o = dp45::ground_state(rtol);
    println!("q0   = {:.17e}", o.q0);
    println!("m_Q  = {:.17e}", o.mass);
    println!("tail: c = {:.12e} matched at r = {}", o.tail_coefficient, o.match_radius);
    let note = format!(
        "oracle-shoot: bisection on Q(0) in [1,10] with adaptive Dormand-Prince 5(4), rtol {rtol:e}; \
         mass integrated along the ODE to r = {} plus analytic c e^-r/r tail",
        o.match_radius
    );
    golden::record(&path, "q0", o.q0, &note)?;
    golden::record(&path, "m_Q", o.mass, &note)?;
    println!("wrote {}", path.display());
    Ok(())
}
