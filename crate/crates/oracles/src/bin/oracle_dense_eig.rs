//! Dense block-operator oracle for the growth rate e0.
//!
//! Usage: oracle-dense-eig [golden.json] [n]

use std::path::PathBuf;

use nls_oracles::{dp45, golden, sine};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("golden/constants.json"));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(512);
    let r_max = 30.0;
    let gs = dp45::ground_state(1e-13);
    let grid = sine::SineGrid::new(n, r_max);
    let f = sine::ground_state(&grid, gs.q0, 1e-13);
    let q0 = f[0] / grid.nodes[0];
    println!("collocation Q near origin = {q0:.12}");
    let (lp, lm) = sine::linearized(&grid, &f);
    let e0 = sine::block_growth_rate(&lp, &lm);
    println!("e0 = {e0:.17e}");
    let note = format!(
        "oracle-dense-eig: largest real eigenvalue of the dense 2n x 2n block operator [[0,-L-],[L+,0]], \
         sine collocation with n = {n}, r_max = {r_max}, ground state by Newton on the collocation system"
    );
    golden::record(&path, "e0", e0, &note)?;
    println!("wrote {}", path.display());
    Ok(())
}
