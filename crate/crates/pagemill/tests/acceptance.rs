//! Release gate: one test per shipping criterion, each with its own
//! runtime budget and, where a computed value is at stake, an
//! independent brute-force oracle frozen into this file. Run with
//! `cargo test --test acceptance` for one pass/fail line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagemill::anneal::{plan_batches, AnnealSchedule, ScheduleShape};
use pagemill::cot::generators::{gen_masked_language, gen_masked_position};
use pagemill::geometry::{distance_breakdown, min_distance, BBox, DistanceCase};
use pagemill::page::parse_page_line;
use pagemill::pipeline::{
    cmd_anneal_plan, cmd_generate, cmd_ingest, cmd_length_report, cmd_stats, cmd_validate,
    PipelineConfig,
};
use pagemill::prompt::patch_count;
use pagemill::xycut::{cell_at, derive_table_model, TableProvenance};

fn budget(t0: Instant, secs: u64, label: &str) {
    let elapsed = t0.elapsed();
    assert!(
        elapsed < Duration::from_secs(secs),
        "{label} took {elapsed:?}, budget {secs}s"
    );
    println!("{label}: done in {elapsed:?} (budget {secs}s)");
}

// ---------------------------------------------------------------------------
// Criterion 1: vision-side token count
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_patch_token_count() {
    let t0 = Instant::now();
    assert_eq!(patch_count(224, 16).unwrap(), 196);
    budget(t0, 1, "criterion 1 (patch tokens)");
}

// ---------------------------------------------------------------------------
// Criterion 2: box distance vs a frozen point-sampling oracle
// ---------------------------------------------------------------------------

/// Distance from an integer point to a solid axis-aligned rectangle via
/// per-axis clamping. Shares no code with the three-case implementation.
fn point_to_rect(px: i32, py: i32, r: &BBox) -> f64 {
    let dx = (r.left - px).max(px - r.right).max(0) as f64;
    let dy = (r.top - py).max(py - r.bottom).max(0) as f64;
    (dx * dx + dy * dy).sqrt()
}

/// Every integer point on the rectangle outline (resolution 1).
fn boundary_points(b: &BBox) -> Vec<(i32, i32)> {
    let mut pts = Vec::new();
    for x in b.left..=b.right {
        pts.push((x, b.top));
        pts.push((x, b.bottom));
    }
    for y in b.top..=b.bottom {
        pts.push((b.left, y));
        pts.push((b.right, y));
    }
    pts
}

/// Brute-force minimum distance between two solid integer rectangles:
/// the closest pair always includes a boundary point of one rectangle,
/// and for axis-aligned integer boxes an integer boundary point attains
/// the minimum exactly (gap cases meet edge-to-edge over an integer
/// interval; corner cases meet corner-to-corner). Scanning both
/// boundaries against the opposite solid also covers containment.
fn oracle_distance(a: &BBox, b: &BBox) -> f64 {
    let mut best = f64::INFINITY;
    for (x, y) in boundary_points(a) {
        best = best.min(point_to_rect(x, y, b));
    }
    for (x, y) in boundary_points(b) {
        best = best.min(point_to_rect(x, y, a));
    }
    best
}

/// Independent case classification from raw interval arithmetic.
fn oracle_case(a: &BBox, b: &BBox) -> DistanceCase {
    let x_span = a.right.min(b.right) - a.left.max(b.left);
    let y_span = a.bottom.min(b.bottom) - a.top.max(b.top);
    match (x_span >= 0, y_span >= 0) {
        (true, true) => DistanceCase::Overlap,
        (false, true) => DistanceCase::HorizontalGap,
        (true, false) => DistanceCase::VerticalGap,
        (false, false) => DistanceCase::Corner,
    }
}

fn sample_box(rng: &mut ChaCha8Rng) -> BBox {
    let w = rng.random_range(0..=120);
    let h = rng.random_range(0..=120);
    let left = rng.random_range(0..=1000 - w);
    let top = rng.random_range(0..=1000 - h);
    BBox::new(left, top, left + w, top + h).unwrap()
}

/// A second box near the first, to exercise overlap, touch, and small gaps.
fn sample_box_near(rng: &mut ChaCha8Rng, anchor: &BBox) -> BBox {
    let w = rng.random_range(0..=120);
    let h = rng.random_range(0..=120);
    let left = (anchor.left + rng.random_range(-140..=140)).clamp(0, 1000 - w);
    let top = (anchor.top + rng.random_range(-140..=140)).clamp(0, 1000 - h);
    BBox::new(left, top, left + w, top + h).unwrap()
}

#[test]
fn criterion_2_min_distance_matches_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5_7a9c_e000_0002);
    let mut case_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..1000 {
        let a = sample_box(&mut rng);
        let b = if i % 2 == 0 {
            sample_box_near(&mut rng, &a)
        } else {
            sample_box(&mut rng)
        };

        let got = min_distance(&a, &b);
        let want = oracle_distance(&a, &b);
        assert!(
            (got - want).abs() <= 1e-9,
            "pair {i}: {a:?} vs {b:?}: got {got}, oracle {want}"
        );

        let breakdown = distance_breakdown(&a, &b);
        let expected_case = oracle_case(&a, &b);
        assert_eq!(
            breakdown.case, expected_case,
            "pair {i}: {a:?} vs {b:?} misclassified"
        );
        *case_counts.entry(expected_case.name()).or_default() += 1;
    }
    assert_eq!(case_counts.len(), 4, "all four cases exercised: {case_counts:?}");
    println!("criterion 2 case coverage: {case_counts:?}");
    budget(t0, 10, "criterion 2 (distance oracle, 1000 pairs)");
}

// ---------------------------------------------------------------------------
// Criterion 3: table-cell recovery on generated grids
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_grid_cell_recovery() {
    let t0 = Instant::now();
    let mut cells_checked = 0usize;
    for i in 0..200u64 {
        // 2..=8 rows overall (header + 1..=7 content rows), 2..=6 columns.
        let rows = 1 + (i % 7) as usize;
        let cols = 2 + (i % 5) as usize;
        let (line, texts) = common::grid_page(&format!("grid-{i}"), rows, cols, 77_000 + i, i, false);
        let page = parse_page_line(&line).expect("grid page parses").page;

        let (model, provenance) = derive_table_model(&page, 10, 50.0).expect("recovery succeeds");
        assert_eq!(provenance, TableProvenance::Recovered);
        assert_eq!(model.n_rows, rows, "grid {i}");
        assert_eq!(model.n_cols, cols, "grid {i}");
        assert!(model.unassigned.is_empty(), "grid {i}: {:?}", model.unassigned);

        let text_of: BTreeMap<usize, &str> = page
            .segments
            .iter()
            .map(|s| (s.index, s.text.as_str()))
            .collect();
        let header_texts: BTreeSet<&str> =
            model.headers.iter().map(|h| text_of[h]).collect();
        let expected_headers: BTreeSet<&str> = texts[0].iter().map(String::as_str).collect();
        assert_eq!(header_texts, expected_headers, "grid {i} headers");

        for row_i in 1..=rows {
            for col_j in 1..=cols {
                let idx = cell_at(&model, row_i, col_j)
                    .unwrap_or_else(|e| panic!("grid {i} cell ({row_i},{col_j}): {e}"));
                assert_eq!(
                    text_of[&idx], texts[row_i][col_j - 1],
                    "grid {i} cell ({row_i},{col_j}) recovered the wrong segment"
                );
                cells_checked += 1;
            }
        }
    }
    println!("criterion 3: {cells_checked} in-range cell queries, all exact");
    budget(t0, 10, "criterion 3 (200 grids)");
}

// ---------------------------------------------------------------------------
// Criterion 4: self-validation at corpus scale, with tamper recall
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_validate_corpus_and_catch_tampering() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let pages = dir.path().join("pages.jsonl");
    let records = dir.path().join("records.jsonl");
    let mut sink = std::io::sink();

    common::write_mixed_corpus(&raw, 10_000, 0x5eed_4000);
    cmd_ingest(&raw, &pages, &mut sink).unwrap();

    let config = PipelineConfig::default();
    let report = cmd_generate(&pages, &config, &records, None, &mut sink).unwrap();
    assert_eq!(report.pages_skipped, 0, "every page must generate");
    assert!(report.lines_written >= 10_000, "{} lines", report.lines_written);

    let stats = cmd_stats(&records, None, &mut sink).unwrap();
    assert_eq!(stats.invalid_lines, 0);
    assert_eq!(stats.counts.len(), 7, "all seven tasks present: {:?}", stats.counts.keys());

    let clean = cmd_validate(&records, &pages, &mut sink).unwrap();
    assert_eq!(
        clean.violations.len(),
        0,
        "clean corpus must validate: {:?}",
        &clean.violations[..clean.violations.len().min(5)]
    );
    assert_eq!(clean.records_checked, report.lines_written);

    // Corrupt 100 evenly spread records with three content mutations:
    // response edit, question edit, render-mode flip.
    let text = std::fs::read_to_string(&records).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let n = lines.len();
    let mut tampered_ids = BTreeSet::new();
    for k in 0..100 {
        let at = k * n / 100;
        let mut value: serde_json::Value = serde_json::from_str(&lines[at]).unwrap();
        match k % 3 {
            0 => {
                let response = value["response"].as_str().unwrap().to_string();
                value["response"] = serde_json::json!(format!("{response} indeed"));
            }
            1 => {
                let question = value["question"].as_str().unwrap().to_string();
                value["question"] = serde_json::json!(format!("{question} please"));
            }
            _ => {
                let flipped = if value["mode"] == "cot" { "direct" } else { "cot" };
                value["mode"] = serde_json::json!(flipped);
            }
        }
        tampered_ids.insert(value["record_id"].as_str().unwrap().to_string());
        lines[at] = value.to_string();
    }
    assert_eq!(tampered_ids.len(), 100, "tampered lines must be distinct records");
    let tampered_path = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered_path, lines.join("\n")).unwrap();

    let caught = cmd_validate(&tampered_path, &pages, &mut sink).unwrap();
    let flagged: BTreeSet<String> = caught
        .violations
        .iter()
        .map(|v| v.record_id.clone())
        .collect();
    let missed: Vec<&String> = tampered_ids.difference(&flagged).collect();
    assert!(missed.is_empty(), "tampered records not flagged: {missed:?}");
    println!(
        "criterion 4: {} records validated clean; 100/100 tampered records caught",
        clean.records_checked
    );
    budget(t0, 60, "criterion 4 (corpus validation)");
}

// ---------------------------------------------------------------------------
// Criterion 5: mix schedule endpoints, monotonicity, realized windows
// ---------------------------------------------------------------------------

fn random_shape(rng: &mut ChaCha8Rng, total_steps: u64) -> ScheduleShape {
    match rng.random_range(0..3) {
        0 => ScheduleShape::Linear,
        1 => ScheduleShape::Cosine,
        _ => {
            let n_knots = rng.random_range(0..=3);
            let mut steps = BTreeSet::new();
            while steps.len() < n_knots && total_steps > 2 {
                steps.insert(rng.random_range(1..total_steps));
            }
            let mut fractions: Vec<f64> =
                (0..steps.len()).map(|_| rng.random_range(0.01..0.99)).collect();
            fractions.sort_by(|a, b| b.partial_cmp(a).unwrap());
            ScheduleShape::Piecewise(steps.into_iter().zip(fractions).collect())
        }
    }
}

#[test]
fn criterion_5_schedule_shapes_and_realized_mix() {
    let t0 = Instant::now();

    // Exact endpoints for every shape and a spread of horizons.
    for total_steps in [1u64, 2, 7, 500, 1000] {
        let shapes = [
            ScheduleShape::Linear,
            ScheduleShape::Cosine,
            ScheduleShape::Piecewise(if total_steps > 2 {
                vec![(total_steps / 2, 0.4)]
            } else {
                vec![]
            }),
        ];
        for shape in shapes {
            let schedule = AnnealSchedule::new(total_steps, shape).unwrap();
            assert_eq!(schedule.cot_fraction(0).unwrap(), 1.0);
            assert_eq!(schedule.cot_fraction(total_steps).unwrap(), 0.0);
        }
    }

    // Monotone nonincreasing on 1000 random (shape, step-pair) draws.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5_7a9c_e000_0005);
    for draw in 0..1000 {
        let total_steps = rng.random_range(2..=2000);
        let schedule = AnnealSchedule::new(total_steps, random_shape(&mut rng, total_steps)).unwrap();
        let s1 = rng.random_range(0..total_steps);
        let s2 = rng.random_range(s1 + 1..=total_steps);
        let f1 = schedule.cot_fraction(s1).unwrap();
        let f2 = schedule.cot_fraction(s2).unwrap();
        assert!(
            f1 >= f2 - 1e-12,
            "draw {draw}: fraction rose from {f2} (step {s2}) above {f1} (step {s1})"
        );
    }

    // Linear horizon 1000, batch 64: every 50-step window of every plan
    // stays within ±0.02 of the target mean. Plan line i targets the
    // curve at i/(T-1), which for the linear shape is 1 - i/(T-1).
    let schedule = AnnealSchedule::new(1000, ScheduleShape::Linear).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let plan = plan_batches(&schedule, 64, seed).unwrap();
        assert_eq!(plan.entries.len(), 1000);
        assert_eq!((plan.entries[0].n_cot, plan.entries[0].n_direct), (64, 0));
        assert_eq!((plan.entries[999].n_cot, plan.entries[999].n_direct), (0, 64));

        let mut cot_prefix = vec![0.0f64; 1001];
        let mut target_prefix = vec![0.0f64; 1001];
        for (i, entry) in plan.entries.iter().enumerate() {
            cot_prefix[i + 1] = cot_prefix[i] + entry.n_cot as f64;
            target_prefix[i + 1] = target_prefix[i] + (1.0 - i as f64 / 999.0);
        }
        for start in 0..=950usize {
            let realized = (cot_prefix[start + 50] - cot_prefix[start]) / (50.0 * 64.0);
            let target = (target_prefix[start + 50] - target_prefix[start]) / 50.0;
            let deviation = (realized - target).abs();
            worst = worst.max(deviation);
            assert!(
                deviation <= 0.02,
                "seed {seed} window {start}: realized {realized:.4} vs target {target:.4}"
            );
        }
    }
    println!("criterion 5: worst realized-mix window deviation {worst:.5} (limit 0.02)");
    budget(t0, 30, "criterion 5 (schedule)");
}

// ---------------------------------------------------------------------------
// Criterion 6: textual vs embedded coordinate cost on a synthetic corpus
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_length_gap_and_ratio() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let pages = dir.path().join("pages.jsonl");
    let csv = dir.path().join("lengths.csv");
    let mut sink = std::io::sink();

    // 100 pages x 50 segments: 10 rows x 5 columns of short cells.
    let words = ["north", "south", "delta", "ridge", "atlas", "pine", "quarry", "vale"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5_7a9c_e000_0006);
    let mut out = String::new();
    for p in 0..100 {
        let mut segments = Vec::new();
        for r in 0..10i32 {
            for c in 0..5i32 {
                let n_words = rng.random_range(1..=3);
                let mut text: Vec<&str> =
                    (0..n_words).map(|_| words[rng.random_range(0..words.len())]).collect();
                let uniq = format!("{}", r * 5 + c);
                text.push(&uniq);
                segments.push(serde_json::json!({
                    "text": text.join(" "),
                    "box": [200 * c + 10, 100 * r + 10, 200 * (c + 1) - 40, 100 * (r + 1) - 30],
                }));
            }
        }
        let line = serde_json::json!({
            "page_id": format!("len-{p}"),
            "width": 1000,
            "height": 1000,
            "segments": segments,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(&raw, out).unwrap();

    cmd_ingest(&raw, &pages, &mut sink).unwrap();
    let summary = cmd_length_report(&pages, &PipelineConfig::default(), &csv, &mut sink).unwrap();
    assert_eq!(summary.pages, 100);

    let per_page_gap = summary.mean_i - summary.mean_ii;
    assert!(
        per_page_gap >= 4.0 * 50.0,
        "textual coordinates must cost at least 4 tokens per segment more: gap {per_page_gap}"
    );
    assert!(
        (2.0..=6.0).contains(&summary.ratio),
        "mode I / mode II ratio {} outside [2, 6]",
        summary.ratio
    );

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = csv_text.lines().collect();
    assert_eq!(rows[0], "page_id,n_segments,len_mode_I,len_mode_II");
    assert_eq!(rows.len(), 102, "100 data rows + header + summary");
    for row in &rows[1..101] {
        assert_eq!(row.split(',').nth(1), Some("50"), "{row}");
    }
    println!(
        "criterion 6: mean I {:.1} vs mean II {:.1} (gap {per_page_gap:.1}, ratio {:.2})",
        summary.mean_i, summary.mean_ii, summary.ratio
    );
    budget(t0, 10, "criterion 6 (length report)");
}

// ---------------------------------------------------------------------------
// Criterion 7: end-to-end reproducibility at scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_pipeline_reproducibility() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");

    common::write_mixed_corpus(&raw, 100_000, 0x5eed_7000);

    let run = |tag: &str, seed: u64| {
        let pages = dir.path().join(format!("pages-{tag}.jsonl"));
        let records = dir.path().join(format!("records-{tag}.jsonl"));
        let plan = dir.path().join(format!("plan-{tag}.jsonl"));
        let mut sink = std::io::sink();
        let config = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        cmd_ingest(&raw, &pages, &mut sink).unwrap();
        let report = cmd_generate(&pages, &config, &records, None, &mut sink).unwrap();
        cmd_anneal_plan(&config, &plan, &mut sink).unwrap();
        (pages, records, plan, report)
    };

    let (pages_a, records_a, plan_a, report_a) = run("a", 11);
    let (pages_b, records_b, plan_b, _) = run("b", 11);
    let (_, records_c, _, _) = run("c", 12);

    assert!(
        report_a.lines_written >= 100_000,
        "corpus must reach 1e5 records, got {}",
        report_a.lines_written
    );
    assert_eq!(report_a.pages_skipped, 0);
    assert_eq!(
        std::fs::read(&pages_a).unwrap(),
        std::fs::read(&pages_b).unwrap(),
        "ingest must be byte-identical"
    );
    let bytes_a = std::fs::read(&records_a).unwrap();
    assert_eq!(
        bytes_a,
        std::fs::read(&records_b).unwrap(),
        "generate must be byte-identical under identical seed"
    );
    assert_eq!(
        std::fs::read(&plan_a).unwrap(),
        std::fs::read(&plan_b).unwrap(),
        "plan must be byte-identical under identical seed"
    );
    assert_ne!(
        bytes_a,
        std::fs::read(&records_c).unwrap(),
        "changed seed must change generate output"
    );
    println!(
        "criterion 7: {} records reproduced byte-identically; seed change diverges",
        report_a.lines_written
    );
    budget(t0, 120, "criterion 7 (reproducibility)");
}

// ---------------------------------------------------------------------------
// Criterion 8: masked tasks invert exactly
// ---------------------------------------------------------------------------

/// Applies a masked-words answer back onto its question and returns the
/// reconstructed text.
fn reconstruct_words(question: &str, answer: &str) -> String {
    let body = question.splitn(2, '\n').nth(1).expect("question body");
    let mut fills = answer.lines();
    let mut rebuilt = Vec::new();
    for token in body.split(' ') {
        if token.starts_with("[MASK_") {
            let fill = fills.next().expect("an answer line per mask");
            let (label, word) = fill.split_once(": ").expect("MASK label");
            assert_eq!(label, token, "answer lines follow mask order");
            rebuilt.push(word);
        } else {
            rebuilt.push(token);
        }
    }
    assert!(fills.next().is_none(), "no surplus answer lines");
    rebuilt.join(" ")
}

/// Applies a masked-boxes answer back onto its question listing.
fn reconstruct_listing(question: &str, answer: &str) -> String {
    let body = question.splitn(2, '\n').nth(1).expect("question body");
    let mut fills = answer.lines();
    let mut rebuilt = Vec::new();
    for line in body.lines() {
        if let Some(prefix) = line.strip_suffix("[BOX?]") {
            let fill = fills.next().expect("an answer line per masked box");
            rebuilt.push(format!("{prefix}{fill}"));
        } else {
            rebuilt.push(line.to_string());
        }
    }
    assert!(fills.next().is_none(), "no surplus answer lines");
    rebuilt.join("\n")
}

#[test]
fn criterion_8_masked_tasks_round_trip() {
    let t0 = Instant::now();
    let mut checked = 0usize;
    for i in 0..500u64 {
        let line = if i % 2 == 0 {
            common::grid_page(&format!("mask-{i}"), 2 + (i % 4) as usize, 2 + (i % 3) as usize, 88_000 + i, i, false).0
        } else {
            common::prose_page(&format!("mask-{i}"), 3 + (i % 6) as usize, 88_000 + i, i, false)
        };
        let page = parse_page_line(&line).unwrap().page;

        let mut rng = ChaCha8Rng::seed_from_u64(0xc8c8_0000 + i);
        let record = gen_masked_language(&page, &mut rng, 0.3, &format!("mask-{i}#ml")).unwrap();
        let original: Vec<&str> = page
            .segments
            .iter()
            .flat_map(|s| s.text.split_whitespace())
            .collect();
        assert_eq!(
            reconstruct_words(&record.question, &record.final_answer),
            original.join(" "),
            "record {i}: masked words must restore the page text exactly"
        );
        checked += 1;

        let record = gen_masked_position(&page, &mut rng, 0.3, &format!("mask-{i}#mp")).unwrap();
        let expected: Vec<String> = page
            .segments
            .iter()
            .map(|s| format!("{}, {}", s.text, s.bbox.render()))
            .collect();
        assert_eq!(
            reconstruct_listing(&record.question, &record.final_answer),
            expected.join("\n"),
            "record {i}: masked boxes must restore the listing exactly"
        );
        checked += 1;
    }
    assert_eq!(checked, 1000);
    println!("criterion 8: {checked} masked records inverted exactly");
    budget(t0, 10, "criterion 8 (mask round trip)");
}
