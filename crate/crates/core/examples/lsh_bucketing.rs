//! Hashes one synthetic user's behavior sequence and shows how the stable
//! sort groups items of the same cluster together.
//!
//! ```bash
//! cargo run --release -p tbin --example lsh_bucketing
//! ```

use std::collections::BTreeMap;

use tbin::data::{generate, rows_of, SyntheticSpec};
use tbin::lsh::{assign, ProjectionMatrix};

fn main() -> tbin::Result<()> {
    let spec = SyntheticSpec { users: 10, ..Default::default() };
    let data = generate(&spec)?;
    let record = &data.train[0];
    let behaviors = rows_of(&data.cache, &record.behaviors)?;
    let cluster = |id: u64| id as usize / spec.items_per_cluster;

    let projection = ProjectionMatrix::sample(spec.behavior_dim, 4, 11)?;
    let (codes, assignment) = assign(&behaviors, &projection)?;
    println!("user {} interests {:?}, L = {}", record.user, record.user_interests, behaviors.rows());

    let mut buckets: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (pos, &id) in assignment.bucket_ids.iter().enumerate() {
        buckets.entry(id).or_default().push(cluster(record.behaviors[pos]));
    }
    println!("{:>6}  {:>4}  {:>5}  clusters", "bucket", "code", "size");
    for (id, members) in &buckets {
        let first = assignment.bucket_ids.iter().position(|x| x == id).unwrap();
        let code: String = codes.row(first).iter().map(|&b| if b { '1' } else { '0' }).collect();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in members {
            *counts.entry(c).or_default() += 1;
        }
        println!("{id:>6}  {code:>4}  {:>5}  {counts:?}", members.len());
    }

    let sorted: Vec<usize> = assignment.perm.iter().map(|&i| cluster(record.behaviors[i])).collect();
    let runs = 1 + sorted.windows(2).filter(|w| w[0] != w[1]).count();
    let raw: Vec<usize> = record.behaviors.iter().map(|&id| cluster(id)).collect();
    let raw_runs = 1 + raw.windows(2).filter(|w| w[0] != w[1]).count();
    println!("cluster runs: {raw_runs} in time order, {runs} after sorting");
    Ok(())
}
