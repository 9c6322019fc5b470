//! Runs every method on a synthetic paired corpus and prints rank-1/rank-5.
//!
//! Usage: `cargo run --release --example synthetic_benchmark [subjects] [noise] [seed] [distractors]`

use std::time::Instant;

use skullface::dataset::{synth_extended_gallery, synth_paired, Protocol};
use skullface::eval::{run_protocol, MethodKind, RunConfig};

fn main() -> skullface::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let subjects: usize = arg(0, "50").parse().expect("subjects");
    let noise: f64 = arg(1, "0.05").parse().expect("noise");
    let seed: u64 = arg(2, "7").parse().expect("seed");
    let distractors: usize = arg(3, "0").parse().expect("distractors");

    let mut corpus = synth_paired(subjects, noise, seed)?;
    let protocol = if distractors > 0 {
        corpus.extend(synth_extended_gallery(distractors, noise, seed.wrapping_add(1))?);
        Protocol::P2
    } else {
        Protocol::P1
    };
    let config = RunConfig::new(protocol, seed);
    let start = Instant::now();
    let reports = run_protocol(&corpus, &MethodKind::ALL, &config)?;
    println!("{:<12} {:>8} {:>8}", "method", "rank-1", "rank-5");
    for r in &reports {
        println!("{:<12} {:>8.2} {:>8.2}", r.method.name(), r.mean_rank1, r.mean_rank5);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
