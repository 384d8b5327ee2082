use tbin::bench::{closed_form_macs, run_schema, sort_input, BenchInput, Schema};

#[test]
fn counters_equal_closed_forms_across_sweep() {
    for len in [256, 512, 1024, 2048] {
        let input = BenchInput::random(len, 16, 16, len as u64).unwrap();
        for schema in [Schema::Global, Schema::Chunk, Schema::ShiftedChunk] {
            let (_, c, _) = run_schema(schema, &input, 64).unwrap();
            assert_eq!(Some(c.macs), closed_form_macs(schema, len, 64, 16), "{schema} {len}");
        }
    }
}

#[test]
fn documented_examples() {
    assert_eq!(closed_form_macs(Schema::Global, 1024, 64, 64), Some(134_217_728));
    assert_eq!(closed_form_macs(Schema::Chunk, 1024, 64, 64), Some(8_388_608));
}

#[test]
fn sort_comparisons_grow_like_l_log_l() {
    for len in [256, 512, 1024, 2048, 4096] {
        let input = BenchInput::random(len, 16, 16, 7 + len as u64).unwrap();
        let cmp = sort_input(&input).unwrap().comparisons as f64;
        let closed = len as f64 * (len as f64).log2();
        let ratio = cmp / closed;
        assert!((0.8..=1.2).contains(&ratio), "L={len}: {cmp} comparisons, ratio {ratio:.3}");
    }
}

#[test]
fn degenerate_single_bucket_equivalence() {
    for (len, d) in [(8, 4), (16, 8), (64, 16)] {
        let input = BenchInput::single_bucket(len, d, len as u64);
        let (reference, _, _) = run_schema(Schema::Global, &input, len).unwrap();
        for schema in Schema::ALL {
            let (out, _, _) = run_schema(schema, &input, len).unwrap();
            assert!(out.max_abs_diff(&reference) < 1e-12, "{schema}");
        }
    }
}

#[test]
fn bucket_schema_matches_chunk_schema_when_buckets_fit() {
    // 8 bits over 256 rows: buckets are small; chunking at the full length
    // makes one chunk, so masked chunk attention is bucket attention.
    let input = BenchInput::random(256, 8, 8, 5).unwrap();
    let (b, _, _) = run_schema(Schema::Bucket, &input, 64).unwrap();
    let (c, _, _) = run_schema(Schema::Chunk, &input, 256).unwrap();
    assert!(b.max_abs_diff(&c) < 1e-12);
}
