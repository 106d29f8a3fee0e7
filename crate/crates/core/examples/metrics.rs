//! Ranking metrics on a small hand-made example: average precision, ROC
//! AUC and the curves behind them.

use volformer::eval::{average_precision, pr_points, roc_auc, roc_points, trapezoid_auc};

fn main() -> volformer::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1];
    let labels = [true, false, true, true, false, false, true, false];
    println!("AP {:.4}", average_precision(&scores, &labels)?);
    println!("ROC AUC {:.4}", roc_auc(&scores, &labels)?);

    let roc = roc_points(&scores, &labels)?;
    println!("trapezoid under ROC {:.4}", trapezoid_auc(&roc));
    println!("threshold   fpr    tpr");
    for (t, fpr, tpr) in &roc {
        println!("{t:>9.2} {fpr:>6.3} {tpr:>6.3}");
    }
    println!("threshold recall precision");
    for (t, r, p) in pr_points(&scores, &labels)? {
        println!("{t:>9.2} {r:>6.3} {p:>9.3}");
    }
    Ok(())
}
