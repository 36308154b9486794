//! Constant-power-load voltage collapse under a conventional two-loop PI
//! controller: the loop rides the 0.5 pu schedule, then the step to 1.0 pu
//! pushes the interface into its negative-incremental-resistance region and
//! the voltage dives through the floor.
//!
//! ```bash
//! cargo run --release -p gridflux --example voltage_collapse
//! ```

use gridflux::sim::{default_rlc_step, run, RlcControllerSpec};

fn main() {
    let scenario = default_rlc_step(RlcControllerSpec::PiTwoLoop(Default::default()));
    let (traj, summary) = run(&scenario).unwrap();

    println!("controller: pi_two_loop (defaults)");
    println!("load step:  0.5 -> 1.0 pu at t = 1 s\n");
    println!("{:>8} {:>10} {:>10} {:>10}", "t [s]", "v1 [pu]", "i_l1", "u1");
    let v = traj.column("v1").unwrap();
    let i = traj.column("i_l1").unwrap();
    let u = traj.column("u1").unwrap();
    let stride = (traj.times.len() / 20).max(1);
    for k in (0..traj.times.len()).step_by(stride) {
        println!(
            "{:8.3} {:10.4} {:10.4} {:10.4}",
            traj.times[k], v[k], i[k], u[k]
        );
    }
    println!();
    match summary.collapse_time {
        Some(t) => println!("voltage collapse at t = {t:.3} s"),
        None => println!("no collapse (unexpected for these gains)"),
    }
    for e in &traj.events {
        println!("event @ {:.4} s: {}", e.t, e.what);
    }
}
