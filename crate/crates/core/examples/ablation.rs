//! Runs every ablation arm on the bundled synthetic suite and prints the
//! per-phase accuracies.

use realcil::protocol::{make_phase_plan, run_ablation, PipelineConfig};
use realcil::synth::{generate, SynthConfig};
use realcil::RngSeed;

fn main() -> realcil::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let suite = generate(&SynthConfig::default())?;
    let cfg = PipelineConfig::default();
    let plan = make_phase_plan(suite.train.num_classes, k, RngSeed(cfg.seeds.plan))?;
    for run in run_ablation(&suite.train, &suite.test, &plan, &cfg)? {
        let r = &run.report;
        println!(
            "{:<13} avg {:.4} last {:.4} base {:.4} inc {:.4} acc {:?}",
            r.arm.name(),
            r.average_accuracy,
            r.last_accuracy,
            r.split.base,
            r.split.incremental,
            r.accuracies.iter().map(|a| (a * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
        eprintln!("  timing {:?}", r.timing);
    }
    Ok(())
}
