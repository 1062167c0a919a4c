//! Synthetic end-to-end comparison of the GMM-UBM baseline with SI and SD
//! PBM systems, in the `%EER/(MinDCF x 100)` layout per non-target type.
//!
//!     cargo run --release --example pbm_vs_baseline -- [corpus.key=value | cfg.key=value]...

use std::error::Error;

use pbmsv::eval::{llr_difference_report, reports_to_table};
use pbmsv::pipeline::{gen_synthetic_corpus, run_pipeline, PipelineConfig, SyntheticSpec};

fn main() -> Result<(), Box<dyn Error>> {
    env_logger::init();
    let mut spec = SyntheticSpec::default();
    let mut cfg = PipelineConfig {
        components: 64,
        ..PipelineConfig::default()
    };
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("expected key=value")?;
        match k.strip_prefix("corpus.") {
            Some(k) => spec.set(k, v)?,
            None => cfg.set(k.trim_start_matches("cfg."), v)?,
        }
    }

    let dir = tempfile::tempdir()?;
    let corpus = gen_synthetic_corpus(&spec, dir.path())?;
    println!("{} utterances in {}", corpus.entries().len(), dir.path().display());
    cfg.manifest = dir.path().join("manifest.txt");
    cfg.features_dir = dir.path().join("features");
    cfg.output = dir.path().join("run");

    let run = run_pipeline(&cfg)?;
    let reports: Vec<_> = run.systems.iter().map(|s| s.report.clone()).collect();
    println!("{} trials\n\n{}", run.trials.len(), reports_to_table(&reports));
    let baseline = &run.systems[0].scores;
    for s in &run.systems {
        if let Some(acc) = s.phrase_accuracy {
            println!("{}: pass-phrase identification {:.2}%", s.scores.system_id(), 100.0 * acc);
        }
        if s.scores.system_id() != baseline.system_id() {
            for f in llr_difference_report(baseline, &s.scores, &run.trials)? {
                println!(
                    "{}: {} lower than {} on {:.2}% of {} trials",
                    s.scores.system_id(),
                    f.label,
                    baseline.system_id(),
                    100.0 * f.fraction(),
                    f.trials
                );
            }
        }
    }
    Ok(())
}
