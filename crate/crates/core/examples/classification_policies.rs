//! Turns risk scores into classes under the top-10%, top-25% and middle-50%
//! policies, with exact-count and threshold tie handling.

use ltu_profiling::policy::{classify_with, quantile_threshold, Policy, TieMode};

fn main() -> ltu_profiling::Result<()> {
    // Twenty scores with a tie straddling the top-25% cut-off.
    let scores = [
        0.91, 0.85, 0.80, 0.72, 0.66, 0.66, 0.66, 0.58, 0.51, 0.47, 0.44, 0.40, 0.38, 0.31, 0.29,
        0.22, 0.18, 0.12, 0.08, 0.03,
    ];
    println!("top-25% threshold: {}", quantile_threshold(&scores, 0.25)?);
    for policy in Policy::standard() {
        for mode in [TieMode::ExactCount, TieMode::Threshold] {
            let y_hat = classify_with(&scores, &policy, mode)?;
            let picked: Vec<String> = (0..scores.len())
                .filter(|&i| y_hat[i])
                .map(|i| i.to_string())
                .collect();
            println!(
                "{:<3} {:<11} {:>2} of {} selected: rows {}",
                policy.name,
                format!("{mode:?}"),
                picked.len(),
                scores.len(),
                picked.join(" ")
            );
        }
    }
    Ok(())
}
