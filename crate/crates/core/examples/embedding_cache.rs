//! Writes a synthetic item embedding table to the binary cache format and
//! reads a few rows back by id without loading the whole file.
//!
//! ```bash
//! cargo run --release -p tbin --example embedding_cache
//! ```

use tbin::data::{generate, CacheReader, SyntheticSpec};

fn main() -> tbin::Result<()> {
    let spec = SyntheticSpec { users: 20, items_per_cluster: 500, ..Default::default() };
    let data = generate(&spec)?;
    let dir = std::env::temp_dir().join("tbin-embedding-cache");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("items.tbec");
    data.cache.write(&path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("{} items x {} dims -> {} ({bytes} bytes)", data.cache.len(), data.cache.dim(), path.display());

    let mut reader = CacheReader::open(&path)?;
    let ids = [0, 1, 2_500, 3_999];
    for (id, row) in ids.iter().zip(reader.read_rows(&ids)?) {
        assert_eq!(row.as_slice(), data.cache.get(*id)?);
        let norm = row.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        println!("item {id:>5}: |x| = {norm:.3}, first {:?}", &row[..3]);
    }
    match reader.read_rows(&[999_999]) {
        Err(e) => println!("missing id -> {}: {e}", e.kind()),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
