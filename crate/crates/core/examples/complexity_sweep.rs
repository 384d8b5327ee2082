//! Times G-SA, B-SA, C-SA and SC-SA attention over growing sequence
//! lengths and prints the CSV report plus doubling ratios.
//!
//! ```bash
//! cargo run --release -p tbin --example complexity_sweep
//! ```

use tbin::bench::{closed_form_macs, doubling_ratios, paired_doubling_ratio, run_sweep, write_csv, Schema, SweepConfig};

fn main() -> tbin::Result<()> {
    let config = SweepConfig::default();
    let reports = run_sweep(&config)?;
    write_csv(std::io::stdout().lock(), &reports)?;

    println!();
    for r in &reports {
        if let Some(m) = closed_form_macs(r.schema, r.len, r.chunk, r.dim) {
            assert_eq!(m, r.macs);
        }
    }
    println!("op counters match closed forms");
    for schema in Schema::ALL {
        let ratios: Vec<String> =
            doubling_ratios(&reports, schema).iter().map(|(a, b, r)| format!("{a}->{b}: {r:.2}")).collect();
        println!("{schema:>6}  {}", ratios.join("  "));
    }
    for schema in [Schema::Global, Schema::Chunk] {
        let (ratio, _) = paired_doubling_ratio(schema, 1024, &config)?;
        println!("{schema:>6}  paired 1024->2048: {ratio:.2}");
    }
    Ok(())
}
