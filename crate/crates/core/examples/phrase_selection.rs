//! Builds speaker-independent pass-phrase background models from the
//! development split and shows which one each test utterance selects.
//!
//!     cargo run --release --example phrase_selection

use std::collections::BTreeMap;
use std::error::Error;

use pbmsv::corpus::Split;
use pbmsv::gmm::{train_ubm, MapConfig};
use pbmsv::pbm::{build_si_pbms, select_pbm_scored, Model};
use pbmsv::pipeline::{synthesize, SyntheticSpec};

fn main() -> Result<(), Box<dyn Error>> {
    let spec = SyntheticSpec {
        dim: 20,
        ..SyntheticSpec::default()
    };
    let (corpus, feats) = synthesize(&spec)?;
    let corpus = &corpus;
    let of = |s: Split| feats.iter().filter(move |m| corpus.get(&m.utterance_id).map(|e| e.split) == Some(s));
    let ubm_data: Vec<_> = of(Split::Ubm).cloned().collect();
    let dev: Vec<_> = of(Split::Dev).cloned().collect();

    let ubm = Model::Gmm(train_ubm(&ubm_data, 32, 5, 0)?);
    let pbms = build_si_pbms(&ubm, &dev, &MapConfig::default())?;
    println!("{} PBMs from {} dev utterances", pbms.entries().len(), dev.len());

    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut margin = 0.0;
    let tests: Vec<_> = of(Split::Test).collect();
    for y in &tests {
        let (chosen, score) = select_pbm_scored(&pbms, y)?;
        let truth = y.phrase_id.clone().unwrap_or_default();
        *confusion.entry((truth, chosen.to_owned())).or_default() += 1;
        margin += score - ubm.score(y)?;
    }
    let phrases: Vec<&str> = pbms.phrases().collect();
    print!("{:>8}", "truth");
    for p in &phrases {
        print!("{p:>6}");
    }
    println!();
    for t in &phrases {
        print!("{t:>8}");
        for c in &phrases {
            print!("{:>6}", confusion.get(&(t.to_string(), c.to_string())).unwrap_or(&0));
        }
        println!();
    }
    let right: usize = phrases.iter().map(|p| confusion.get(&(p.to_string(), p.to_string())).unwrap_or(&0)).sum();
    println!("accuracy {:.2}% over {} utterances", 100.0 * right as f64 / tests.len() as f64, tests.len());
    println!("selected PBM beats the UBM by {:.3} nats/frame on average", margin / tests.len() as f64);
    Ok(())
}
