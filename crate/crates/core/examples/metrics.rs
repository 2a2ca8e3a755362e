//! Ranking metrics on hand-made lists.

use mobgm::eval::{ndcg_at_k, ndcg_from_gains, recall_at_k};

fn main() -> mobgm::Result<()> {
    let t = |i: u32| vec![100 + i];
    let golden: Vec<_> = (0..5).map(t).collect();
    let generated = vec![t(0), t(9), t(2), t(4), t(8)];
    for k in [1, 3, 5] {
        println!(
            "k={k}: recall {:.3}, ndcg {:.4}",
            recall_at_k(&generated, &golden, k)?,
            ndcg_at_k(&generated, &golden, k)?
        );
    }
    println!("binary gains [1, 0, 1], two relevant: NDCG@3 = {:.4}", ndcg_from_gains(&[1.0, 0.0, 1.0], &[1.0, 1.0], 3)?);
    Ok(())
}
