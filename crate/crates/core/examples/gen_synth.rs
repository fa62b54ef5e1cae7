//! Regenerate the bundled synthetic dataset under data/synth60/.
//!
//! Usage: cargo run -p rulerank --example gen_synth [DIR]

use std::path::PathBuf;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/synth60"));
    let ds = rulerank::synth::planted(42);
    rulerank::synth::write_all(&dir, &ds).expect("write dataset");
    let conf = "\
# Walkthrough configuration for the bundled synthetic dataset.
# Paths are relative to this file.
train=train.tsv
valid=valid.tsv
test=test.tsv
rules=out/rules.tsv
sims=out/sims.bin
thresholds=out/thresholds.tsv
predictions=out/predictions.txt
report=out/report.txt
clusters=out/clusters.tsv
seed=42
threads=0
top_k=100
minhash_k=256
miner_mode=iterations
miner_iterations=30000
max_len_cyclic=3
max_len_acyclic=1
min_support=2
min_confidence=0.0001
grid_steps=50
random_levels=10
random_iterations=300
apply_split=test
";
    std::fs::write(dir.join("synth.conf"), conf).expect("write config");
    println!("wrote {}", dir.display());
}
