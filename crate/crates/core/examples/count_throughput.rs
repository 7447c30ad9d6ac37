//! Single-threaded document-frequency counting speed on a synthetic corpus.
//!
//! cargo run --release --example count_throughput -- [MEGABYTES]

use std::time::Instant;

use gramsight::ngram_index::{CountOptions, DocFreqCounter};
use gramsight::synth::{generate, SynthConfig};

fn main() -> gramsight::Result<()> {
    let megabytes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    // 540 samples of ~megabytes/540 MB each
    let per_sample = megabytes * 1_000_000 / 540;
    let config = SynthConfig {
        min_bytes: per_sample * 9 / 10,
        max_bytes: per_sample * 11 / 10,
        literal_rate: 0.05,
        ..SynthConfig::default()
    };
    let corpus = generate(&config)?;
    let total = corpus.total_bytes();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let start = Instant::now();
    let table = pool.install(|| {
        let mut counter = DocFreqCounter::new(6, CountOptions::default())?;
        for s in &corpus.samples {
            counter.add(&s.stream)?;
        }
        counter.finish_with_min_df(5)
    })?;
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{:.1} MB in {:.2} s: {:.1} MB/s",
        total as f64 / 1e6,
        secs,
        total as f64 / 1e6 / secs
    );
    println!("{} n-grams with document frequency >= 5", table.len());
    Ok(())
}
