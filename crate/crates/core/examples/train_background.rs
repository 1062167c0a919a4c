//! Trains the two background model families on a synthetic corpus: a GMM by
//! binary splitting + EM and a left-to-right HMM by Baum-Welch, and prints
//! the per-iteration training log-likelihood.
//!
//!     cargo run --release --example train_background

use std::error::Error;

use pbmsv::corpus::Split;
use pbmsv::gmm::{train_ubm_traced, UbmTrainConfig};
use pbmsv::hmm::{train_hmm_ubm_traced, viterbi_path, HmmTrainConfig};
use pbmsv::pipeline::{synthesize, SyntheticSpec};

fn main() -> Result<(), Box<dyn Error>> {
    let spec = SyntheticSpec {
        dim: 12,
        num_ubm_speakers: 20,
        ..SyntheticSpec::default()
    };
    let (corpus, feats) = synthesize(&spec)?;
    let ubm_data: Vec<_> = feats
        .into_iter()
        .filter(|m| corpus.get(&m.utterance_id).map(|e| e.split) == Some(Split::Ubm))
        .collect();
    let frames: usize = ubm_data.iter().map(|m| m.len()).sum();
    println!("{} utterances, {frames} frames, dim {}", ubm_data.len(), spec.dim);

    let cfg = UbmTrainConfig {
        components: 32,
        em_iterations: 8,
        ..UbmTrainConfig::default()
    };
    let (gmm, h) = train_ubm_traced(&ubm_data, &cfg)?;
    println!("\nGMM C={} hash {}", gmm.num_components(), &gmm.hash()[..12]);
    for (i, v) in h.iter().enumerate() {
        println!("  iter {i:2}  avg loglik {:.4}", v / frames as f64);
    }

    let cfg = HmmTrainConfig {
        states: 6,
        components_per_state: 4,
        bw_iterations: 8,
        ..HmmTrainConfig::default()
    };
    let (hmm, h) = train_hmm_ubm_traced(&ubm_data, &cfg)?;
    println!("\nHMM S={} x {} components", hmm.num_states(), cfg.components_per_state);
    for (i, v) in h.iter().enumerate() {
        println!("  iter {i:2}  avg loglik {:.4}", v / frames as f64);
    }
    let self_loops: Vec<String> = (0..hmm.num_states()).map(|s| format!("{:.3}", hmm.transitions()[[s, s]])).collect();
    println!("  self-loops {}", self_loops.join(" "));
    let (path, _) = viterbi_path(&hmm, &ubm_data[0])?;
    let mut runs = vec![0usize; hmm.num_states()];
    for s in path {
        runs[s] += 1;
    }
    println!("  frames per state in {}: {runs:?}", ubm_data[0].utterance_id);
    Ok(())
}
