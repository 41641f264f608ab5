//! Prints the Monte-Carlo Bayes risk of the synthetic mixture task.
fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let est = lpc::data::SyntheticSpec::default().bayes_risk_mc(n, seed).unwrap();
    println!("risk {:.6} std_error {:.6} samples {}", est.risk, est.std_error, est.samples);
}
