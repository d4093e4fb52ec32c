//! Synthetic raw-OCR corpus builders shared by the integration tests.
//!
//! Every builder is deterministic in its arguments, emits raw-format
//! JSONL lines (pixel coordinates, arbitrary page size), and produces
//! pages on which every applicable task generator succeeds — in
//! particular, table-structure recovery is clean by construction, so
//! corpus generation never skips a page.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

const WORDS: [&str; 24] = [
    "alpha", "beta", "gamma", "delta", "sigma", "omega", "total", "amount", "invoice", "date",
    "item", "price", "quantity", "north", "south", "east", "west", "report", "summary", "balance",
    "credit", "debit", "ledger", "account",
];

fn page_rng(seed: u64, page_no: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ page_no.wrapping_mul(0x9e3779b97f4a7c15))
}

fn word(rng: &mut ChaCha8Rng) -> &'static str {
    WORDS[rng.random_range(0..WORDS.len())]
}

/// Text that is unique within a page thanks to the trailing counter.
fn unique_text(rng: &mut ChaCha8Rng, uniq: usize) -> String {
    let mut text = String::new();
    for i in 0..rng.random_range(1..=3usize) {
        if i > 0 {
            text.push(' ');
        }
        text.push_str(word(rng));
    }
    let _ = write!(text, " {uniq}");
    text
}

fn push_segment(out: &mut String, first: &mut bool, text: &str, b: [i32; 4]) {
    if !*first {
        out.push_str(", ");
    }
    *first = false;
    let _ = write!(
        out,
        r#"{{"text": "{text}", "box": [{}, {}, {}, {}]}}"#,
        b[0], b[1], b[2], b[3]
    );
}

/// Grid-table page: one header row plus `rows` content rows by `cols`
/// columns, cell edges jittered by up to 4 units. Whitespace between
/// rows and columns always exceeds 20 units, so structure recovery with
/// the default `min_gap = 10` and `column_tolerance = 50` is exact.
/// Returns the JSONL line and the cell texts, `texts[row][col]` with
/// row 0 = headers.
pub fn grid_page(
    page_id: &str,
    rows: usize,
    cols: usize,
    seed: u64,
    page_no: u64,
    with_layout: bool,
) -> (String, Vec<Vec<String>>) {
    assert!((1..=7).contains(&rows) && (2..=6).contains(&cols));
    let mut rng = page_rng(seed, page_no);
    let total_rows = rows + 1;
    let band_h = 960 / total_rows as i32;
    let band_w = 960 / cols as i32;
    let mut texts = vec![vec![String::new(); cols]; total_rows];
    let mut segs = String::new();
    let mut first = true;
    let mut uniq = 0usize;
    for r in 0..total_rows {
        for c in 0..cols {
            let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0..=4i32);
            let top = band_h * r as i32 + 12 + jitter(&mut rng);
            let bottom = band_h * (r + 1) as i32 - 24 - jitter(&mut rng);
            let left = band_w * c as i32 + 12 + jitter(&mut rng);
            let right = band_w * (c + 1) as i32 - 24 - jitter(&mut rng);
            let text = unique_text(&mut rng, uniq);
            uniq += 1;
            push_segment(&mut segs, &mut first, &text, [left, top, right, bottom]);
            texts[r][c] = text;
        }
    }
    let layout = if with_layout {
        let header_bottom = band_h - 20;
        let body_top = band_h + 10;
        format!(
            r#", "layout": [{{"box": [8, 8, 952, {header_bottom}], "type": "Title"}}, {{"box": [8, {body_top}, 952, 952], "type": "Table"}}]"#
        )
    } else {
        String::new()
    };
    let line = format!(
        r#"{{"page_id": "{page_id}", "width": 960, "height": 960, "segments": [{segs}]{layout}}}"#
    );
    (line, texts)
}

/// Prose page: `n_lines` full-width stacked lines, one segment each, so
/// single-column structure recovery is always clean. Layout annotations
/// mark the first line as a title and the rest as text when requested.
pub fn prose_page(
    page_id: &str,
    n_lines: usize,
    seed: u64,
    page_no: u64,
    with_layout: bool,
) -> String {
    assert!((2..=12).contains(&n_lines));
    let mut rng = page_rng(seed, page_no.wrapping_add(0x517c_c1b7_2722_0a95));
    let band = 960 / n_lines as i32;
    let mut segs = String::new();
    let mut first = true;
    for i in 0..n_lines {
        let top = band * i as i32 + 10 + rng.random_range(0..=4i32);
        let bottom = band * (i + 1) as i32 - 22 - rng.random_range(0..=4i32);
        let right = rng.random_range(700..=940i32);
        let text = unique_text(&mut rng, i);
        push_segment(&mut segs, &mut first, &text, [20, top, right, bottom]);
    }
    let layout = if with_layout {
        let title_bottom = band - 10;
        format!(
            r#", "layout": [{{"box": [10, 4, 950, {title_bottom}], "type": "Title"}}, {{"box": [10, {title_bottom}, 950, 956], "type": "Text"}}]"#
        )
    } else {
        String::new()
    };
    format!(
        r#"{{"page_id": "{page_id}", "width": 960, "height": 960, "segments": [{segs}]{layout}}}"#
    )
}

/// Mixed raw corpus cycling through grid and prose pages of varying
/// shapes, all layout-annotated on every third page. Returns the line
/// count (= page count).
pub fn write_mixed_corpus(path: &Path, n_pages: usize, seed: u64) -> usize {
    let mut out = String::with_capacity(n_pages * 420);
    for i in 0..n_pages {
        let page_id = format!("p{i:06}");
        let with_layout = i % 3 != 2;
        let line = match i % 4 {
            0 | 2 => {
                let rows = 1 + (i / 4) % 5;
                let cols = 2 + (i / 2) % 4;
                grid_page(&page_id, rows, cols, seed, i as u64, with_layout).0
            }
            _ => {
                let n_lines = 3 + (i / 4) % 6;
                prose_page(&page_id, n_lines, seed, i as u64, with_layout)
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).expect("write corpus");
    n_pages
}
