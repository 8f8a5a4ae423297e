//! Verify the hand-written reverse-mode gradients of the full episode loss
//! against central finite differences, across all five scoring variants.

use semshot::trainer::run_gradcheck;

fn main() {
    let summary = run_gradcheck(1, 25, 1e-4).expect("gradients must match");
    println!(
        "{} instances checked ({} coordinates in total)",
        summary.instances, summary.coords_checked
    );
    println!(
        "worst relative error {:.3e} at {}",
        summary.worst_rel_err, summary.worst_param
    );
}
