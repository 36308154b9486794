//! The four-controller study on the reference load step: conventional
//! two-loop PI collapses, PD rides through with droop, single-timescale
//! energy alignment is too slow for the interface dynamics, and the
//! two-timescale energy controller settles with vanishing port imbalance.
//!
//! ```bash
//! cargo run --release -p gridflux --example controller_comparison
//! ```

use gridflux::sim::{default_rlc_step, run, RlcControllerSpec};

fn main() {
    let specs = [
        RlcControllerSpec::PiTwoLoop(Default::default()),
        RlcControllerSpec::Pd(Default::default()),
        RlcControllerSpec::EnergySingle(Default::default()),
        RlcControllerSpec::EnergyTwoTs(Default::default()),
    ];

    println!(
        "{:>14} {:>10} {:>12} {:>9} {:>12} {:>11} {:>11}",
        "controller", "collapsed", "collapse_t", "settled", "settling_t", "|dP| post", "|dQ.| post"
    );
    for spec in specs {
        let scenario = default_rlc_step(spec);
        let (_, s) = run(&scenario).unwrap();
        let fmt_t = |t: Option<f64>| t.map_or("-".to_string(), |v| format!("{v:.3}"));
        let fmt_r = |r: Option<f64>| r.map_or("-".to_string(), |v| format!("{v:.2e}"));
        println!(
            "{:>14} {:>10} {:>12} {:>9} {:>12} {:>11} {:>11}",
            s.controller,
            s.collapsed,
            fmt_t(s.collapse_time),
            s.settled,
            fmt_t(s.settling_time),
            fmt_r(s.port_residual_p),
            fmt_r(s.port_residual_q_dot),
        );
    }
}
