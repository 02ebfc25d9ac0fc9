// Scratch measurement: temporal convergence of the adaptive ladders against
// a time-resolved reference on the same grid.

use acflow_cli::config::{OrderChoice, RunConfig};
use acflow_cli::drivers::{default_ladder, log_log_slope, run_convergence, temporal_reference};
use acflow_core::FaceField;

#[test]
#[ignore]
fn probe_reference_ladders() {
    let mut cfg = RunConfig::default();
    cfg.nx = 64;
    cfg.ny = 64;
    let t0 = std::time::Instant::now();
    let reference = temporal_reference(&cfg).unwrap();
    println!("reference built in {:.1}s", t0.elapsed().as_secs_f64());
    for order in [OrderChoice::Second, OrderChoice::First] {
        cfg.order = order;
        let entries = run_convergence(&cfg, &default_ladder(), true).unwrap();
        println!("=== order {:?} ===", order);
        let mut ks = Vec::new();
        let mut errs = Vec::new();
        for e in &entries {
            let err_t = FaceField::lin2(1.0, &e.run.final_u, -1.0, &reference).norm();
            println!(
                "tol={:.3e} avg_k={:.4e} err_temporal={:.4e} err_exact={:.4e} steps={} rej={}",
                e.tol,
                e.run.avg_k,
                err_t,
                e.run.final_err_u.unwrap(),
                e.run.steps,
                e.run.rejections
            );
            ks.push(e.run.avg_k);
            errs.push(err_t);
        }
        println!("temporal slope: {:.3}", log_log_slope(&ks, &errs));
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
