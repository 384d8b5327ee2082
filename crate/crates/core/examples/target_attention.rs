//! Pools chunks into interest vectors and scores them against two targets.
//! With a hand-set scorer that rewards agreement, the weight moves to the
//! interest closest to the target.
//!
//! ```bash
//! cargo run --release -p tbin --example target_attention
//! ```

use tbin::chunk::partition;
use tbin::diff::{Graph, Tensor2};
use tbin::interest::{aggregate, attention_scores, pool_chunks, TargetAttentionParams};
use tbin::nn::{Linear, Mlp};

fn main() -> tbin::Result<()> {
    let d = 2;
    // Two chunks of "east" items, one chunk of "north" items.
    let rows = [[1.0, 0.1], [0.9, -0.1], [1.1, 0.0], [1.0, 0.0], [0.8, 0.1], [1.0, -0.1], [0.0, 1.0], [0.1, 0.9]];
    let x = Tensor2::from_fn(8, d, |r, c| rows[r][c]);
    let layout = partition(8, 2)?;

    // Hidden unit k fires only when interest and target both point along axis k.
    let params = TargetAttentionParams {
        target: Linear { w: Tensor2::from_fn(d, d, |r, c| f64::from(u8::from(r == c))), b: Tensor2::zeros(1, d) },
        score: Mlp {
            hidden: Linear {
                w: Tensor2::from_fn(2 * d, d, |r, c| if r % d == c { 1.0 } else { 0.0 }),
                b: Tensor2::from_fn(1, d, |_, _| -1.2),
            },
            out: Linear { w: Tensor2::from_fn(d, 1, |_, _| 2.0), b: Tensor2::zeros(1, 1) },
        },
    };

    for (name, t) in [("east", [1.0, 0.0]), ("north", [0.0, 1.0])] {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let set = pool_chunks(&mut g, xv, &layout)?;
        let target = g.leaf(Tensor2::row_vector(t.to_vec()));
        let p = params.map(&mut |w| g.leaf(w.clone()));
        let scores = attention_scores(&mut g, set.vectors, target, &p)?;
        let xi = aggregate(&mut g, set.vectors, scores)?;
        let s = g.value(scores).data().to_vec();
        println!("target {name:>5}: scores {:?}  x_i = {:?}", round(&s), round(g.value(xi).data()));
    }
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
