//! Faithfulness checking: every claim a record makes must be recomputable
//! from its source page.
//!
//! For CoT tasks the verifier rebuilds the expected reasoning steps from
//! the parameters stored in record metadata — the step builders are
//! deterministic functions of (page, params), so narrations, bound values,
//! and the final answer all admit exact comparison. For direct tasks the
//! record's answer structure is checked against the page (restored text,
//! listed boxes, described counts). Violations cite the offending step
//! when the check is step-scoped.

use crate::cot::generators::{
    description_answer, geometric_steps, layout_steps, table_steps, GeometricQuery,
};
use crate::cot::{unbound_narration_numbers, CotStep, InstructionRecord, TaskKind};
use crate::geometry::BBox;
use crate::page::DocumentPage;
use crate::xycut::derive_table_model;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One failed check. `step_no` is set when the failure is localized to a
/// reasoning step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record_id: String,
    pub step_no: Option<usize>,
    pub message: String,
}

fn violation(record: &InstructionRecord, step_no: Option<usize>, message: String) -> Violation {
    Violation {
        record_id: record.record_id.clone(),
        step_no,
        message,
    }
}

fn meta_value<'a>(
    record: &'a InstructionRecord,
    key: &str,
) -> Result<&'a serde_json::Value, String> {
    record
        .metadata
        .get(key)
        .ok_or_else(|| format!("metadata key '{key}' is missing"))
}

fn meta_usize(record: &InstructionRecord, key: &str) -> Result<usize, String> {
    meta_value(record, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| format!("metadata key '{key}' is not a non-negative integer"))
}

fn meta_i32(record: &InstructionRecord, key: &str) -> Result<i32, String> {
    meta_value(record, key)?
        .as_i64()
        .and_then(|v| i32::try_from(v).ok())
        .ok_or_else(|| format!("metadata key '{key}' is not an integer"))
}

fn meta_f64(record: &InstructionRecord, key: &str) -> Result<f64, String> {
    meta_value(record, key)?
        .as_f64()
        .ok_or_else(|| format!("metadata key '{key}' is not a number"))
}

fn meta_str<'a>(record: &'a InstructionRecord, key: &str) -> Result<&'a str, String> {
    meta_value(record, key)?
        .as_str()
        .ok_or_else(|| format!("metadata key '{key}' is not a string"))
}

fn meta_box(record: &InstructionRecord, key: &str) -> Result<BBox, String> {
    let raw = meta_value(record, key)?
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| format!("metadata key '{key}' is not a 4-element array"))?;
    let mut coords = [0i32; 4];
    for (slot, value) in coords.iter_mut().zip(raw) {
        *slot = value
            .as_i64()
            .and_then(|v| i32::try_from(v).ok())
            .ok_or_else(|| format!("metadata key '{key}' holds a non-integer coordinate"))?;
    }
    BBox::new(coords[0], coords[1], coords[2], coords[3])
        .map_err(|e| format!("metadata key '{key}' is not a valid box: {e}"))
}

/// Compares the record's stored steps against independently recomputed
/// ones: step numbers, narration bytes, bound-value key sets, and
/// bound-value contents (exact, or within relative tolerance for reals).
fn compare_steps(record: &InstructionRecord, expected: &[CotStep], out: &mut Vec<Violation>) {
    let actual = record.cot_steps.as_deref().unwrap_or(&[]);
    if actual.len() != expected.len() {
        out.push(violation(
            record,
            None,
            format!(
                "expected {} reasoning steps, record has {}",
                expected.len(),
                actual.len()
            ),
        ));
    }
    for (exp, act) in expected.iter().zip(actual) {
        if act.step_no != exp.step_no {
            out.push(violation(
                record,
                Some(exp.step_no),
                format!("step numbered {} where {} was expected", act.step_no, exp.step_no),
            ));
        }
        if act.narration != exp.narration {
            out.push(violation(
                record,
                Some(exp.step_no),
                "narration differs from the recomputed text".to_string(),
            ));
        }
        let exp_keys: BTreeSet<&String> = exp.bound_values.keys().collect();
        let act_keys: BTreeSet<&String> = act.bound_values.keys().collect();
        for missing in exp_keys.difference(&act_keys) {
            out.push(violation(
                record,
                Some(exp.step_no),
                format!("bound value '{missing}' is missing"),
            ));
        }
        for extra in act_keys.difference(&exp_keys) {
            out.push(violation(
                record,
                Some(exp.step_no),
                format!("bound value '{extra}' is not part of this step"),
            ));
        }
        for (key, exp_val) in &exp.bound_values {
            if let Some(act_val) = act.bound_values.get(key) {
                if !exp_val.matches(act_val) {
                    out.push(violation(
                        record,
                        Some(exp.step_no),
                        format!(
                            "bound value '{key}' does not recompute: recorded {act_val:?}, expected {exp_val:?}"
                        ),
                    ));
                }
            }
        }
    }
}

fn check_answer(record: &InstructionRecord, expected: &str, out: &mut Vec<Violation>) {
    if record.final_answer != expected {
        out.push(violation(
            record,
            None,
            format!(
                "final answer does not recompute: recorded {:?}, expected {expected:?}",
                record.final_answer
            ),
        ));
    }
}

fn verify_layout(record: &InstructionRecord, page: &DocumentPage, out: &mut Vec<Violation>) {
    let params = (|| {
        Ok::<_, String>((meta_box(record, "target_area")?, meta_usize(record, "k_neighbors")?))
    })();
    let (target, k_neighbors) = match params {
        Ok(p) => p,
        Err(message) => {
            out.push(violation(record, None, message));
            return;
        }
    };
    match layout_steps(page, &target, k_neighbors) {
        Ok((steps, answer_type)) => {
            compare_steps(record, &steps, out);
            check_answer(record, answer_type.name(), out);
        }
        Err(e) => out.push(violation(
            record,
            None,
            format!("reasoning steps cannot be recomputed: {e}"),
        )),
    }
}

fn verify_table(record: &InstructionRecord, page: &DocumentPage, out: &mut Vec<Violation>) {
    let params = (|| {
        Ok::<_, String>((
            meta_usize(record, "row_i")?,
            meta_usize(record, "col_j")?,
            meta_i32(record, "min_gap")?,
            meta_f64(record, "column_tolerance")?,
            meta_str(record, "structure")?.to_string(),
        ))
    })();
    let (row_i, col_j, min_gap, column_tolerance, structure) = match params {
        Ok(p) => p,
        Err(message) => {
            out.push(violation(record, None, message));
            return;
        }
    };
    let (model, provenance) = match derive_table_model(page, min_gap, column_tolerance) {
        Ok(m) => m,
        Err(e) => {
            out.push(violation(
                record,
                None,
                format!("table structure cannot be recomputed: {e}"),
            ));
            return;
        }
    };
    if provenance.name() != structure {
        out.push(violation(
            record,
            None,
            format!(
                "structure source does not recompute: recorded '{structure}', derived '{}'",
                provenance.name()
            ),
        ));
    }
    match table_steps(page, &model, row_i, col_j) {
        Ok((steps, answer)) => {
            compare_steps(record, &steps, out);
            check_answer(record, &answer, out);
        }
        Err(e) => out.push(violation(
            record,
            None,
            format!("reasoning steps cannot be recomputed: {e}"),
        )),
    }
}

fn verify_geometric(record: &InstructionRecord, page: &DocumentPage, out: &mut Vec<Violation>) {
    let params = (|| {
        let query_name = meta_str(record, "query")?;
        let query = GeometricQuery::from_name(query_name)
            .ok_or_else(|| format!("metadata key 'query' holds unknown value '{query_name}'"))?;
        Ok::<_, String>((meta_usize(record, "idx_a")?, meta_usize(record, "idx_b")?, query))
    })();
    let (idx_a, idx_b, query) = match params {
        Ok(p) => p,
        Err(message) => {
            out.push(violation(record, None, message));
            return;
        }
    };
    match geometric_steps(page, idx_a, idx_b) {
        Ok((steps, breakdown, direction)) => {
            compare_steps(record, &steps, out);
            let expected = match query {
                GeometricQuery::Distance => crate::cot::fmt_2dp(breakdown.distance),
                GeometricQuery::Direction => direction.name().to_string(),
            };
            check_answer(record, &expected, out);
        }
        Err(e) => out.push(violation(
            record,
            None,
            format!("reasoning steps cannot be recomputed: {e}"),
        )),
    }
}

fn verify_description(record: &InstructionRecord, page: &DocumentPage, out: &mut Vec<Violation>) {
    match description_answer(page) {
        Ok(expected) => check_answer(record, &expected, out),
        Err(e) => out.push(violation(
            record,
            None,
            format!("description cannot be recomputed: {e}"),
        )),
    }
}

fn verify_reconstruction(record: &InstructionRecord, page: &DocumentPage, out: &mut Vec<Violation>) {
    let sample_k = match meta_usize(record, "sample_k") {
        Ok(k) => k,
        Err(message) => {
            out.push(violation(record, None, message));
            return;
        }
    };
    let lines: Vec<&str> = record.final_answer.lines().collect();
    if lines.len() != sample_k {
        out.push(violation(
            record,
            None,
            format!("answer lists {} segments, metadata says {sample_k}", lines.len()),
        ));
    }
    let listings: BTreeSet<String> = page
        .segments
        .iter()
        .map(|s| format!("{}, {}", s.text, s.bbox.render()))
        .collect();
    let mut seen = BTreeSet::new();
    for line in &lines {
        if !listings.contains(*line) {
            out.push(violation(
                record,
                None,
                format!("answer line {line:?} matches no segment on the page"),
            ));
        }
        if !seen.insert(*line) {
            out.push(violation(
                record,
                None,
                format!("answer line {line:?} is listed twice"),
            ));
        }
    }
}

fn verify_masked_language(
    record: &InstructionRecord,
    page: &DocumentPage,
    out: &mut Vec<Violation>,
) {
    let Some((_, masked_text)) = record.question.split_once('\n') else {
        out.push(violation(
            record,
            None,
            "question has no masked-text line".to_string(),
        ));
        return;
    };
    let canonical: Vec<&str> = page
        .segments
        .iter()
        .flat_map(|s| s.text.split_whitespace())
        .collect();
    let mut restored: Vec<String> = masked_text.split(' ').map(String::from).collect();
    let mut expected_sentinel = 1usize;
    for line in record.final_answer.lines() {
        let Some((sentinel, word)) = line.split_once(": ") else {
            out.push(violation(
                record,
                None,
                format!("answer line {line:?} is not of the form '[MASK_n]: word'"),
            ));
            return;
        };
        if sentinel != format!("[MASK_{expected_sentinel}]") {
            out.push(violation(
                record,
                None,
                format!("answer names {sentinel} where [MASK_{expected_sentinel}] was expected"),
            ));
            return;
        }
        let Some(slot) = restored.iter().position(|t| t == sentinel) else {
            out.push(violation(
                record,
                None,
                format!("{sentinel} does not appear in the masked text"),
            ));
            return;
        };
        restored[slot] = word.to_string();
        expected_sentinel += 1;
    }
    if restored.iter().any(|t| t.starts_with("[MASK_")) {
        out.push(violation(
            record,
            None,
            "masked text contains sentinels the answer does not restore".to_string(),
        ));
        return;
    }
    let canonical_joined = canonical.join(" ");
    if restored.join(" ") != canonical_joined {
        out.push(violation(
            record,
            None,
            "restoring the masked words does not reproduce the page text".to_string(),
        ));
    }
}

fn verify_masked_position(
    record: &InstructionRecord,
    page: &DocumentPage,
    out: &mut Vec<Violation>,
) {
    let Some((_, listing)) = record.question.split_once('\n') else {
        out.push(violation(
            record,
            None,
            "question has no listing lines".to_string(),
        ));
        return;
    };
    let lines: Vec<&str> = listing.lines().collect();
    if lines.len() != page.n_segments() {
        out.push(violation(
            record,
            None,
            format!(
                "question lists {} segments, the page has {}",
                lines.len(),
                page.n_segments()
            ),
        ));
        return;
    }
    let mut answers = record.final_answer.lines();
    let mut masked = 0usize;
    for (seg, line) in page.segments.iter().zip(&lines) {
        let full = format!("{}, {}", seg.text, seg.bbox.render());
        let hidden = format!("{}, [BOX?]", seg.text);
        if **line == full {
            continue;
        }
        if **line == hidden {
            masked += 1;
            match answers.next() {
                Some(answer) if answer == seg.bbox.render() => {}
                Some(answer) => out.push(violation(
                    record,
                    None,
                    format!(
                        "answer gives {answer} for segment {}, expected {}",
                        seg.index,
                        seg.bbox.render()
                    ),
                )),
                None => {
                    out.push(violation(
                        record,
                        None,
                        "answer supplies fewer boxes than the question masks".to_string(),
                    ));
                    return;
                }
            }
        } else {
            out.push(violation(
                record,
                None,
                format!("listing line {line:?} matches segment {} in neither form", seg.index),
            ));
        }
    }
    if answers.next().is_some() {
        out.push(violation(
            record,
            None,
            "answer supplies more boxes than the question masks".to_string(),
        ));
    }
    if masked == 0 {
        out.push(violation(record, None, "no box is masked".to_string()));
    }
    if masked == page.n_segments() {
        out.push(violation(
            record,
            None,
            "every box is masked; at least one must stay visible".to_string(),
        ));
    }
}

/// Runs every check applicable to the record's task against its source
/// page. An empty result means the record is internally consistent and
/// faithful to the page.
pub fn verify_record(record: &InstructionRecord, page: &DocumentPage) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.page_id != page.page_id {
        out.push(violation(
            record,
            None,
            format!(
                "record references page '{}' but was checked against '{}'",
                record.page_id, page.page_id
            ),
        ));
        return out;
    }
    if record.question.is_empty() {
        out.push(violation(record, None, "question is empty".to_string()));
    }
    if record.final_answer.is_empty() {
        out.push(violation(record, None, "final answer is empty".to_string()));
    }

    if let Some(steps) = &record.cot_steps {
        for step in steps {
            for token in unbound_narration_numbers(step) {
                out.push(violation(
                    record,
                    Some(step.step_no),
                    format!("numeric token '{token}' in the narration matches no bound value"),
                ));
            }
        }
    }

    let has_steps = record.cot_steps.as_ref().map(|s| !s.is_empty()).unwrap_or(false);
    if record.task.has_cot() && !has_steps {
        out.push(violation(
            record,
            None,
            format!("task {} requires reasoning steps but the record has none", record.task),
        ));
        return out;
    }
    if !record.task.has_cot() && record.cot_steps.is_some() {
        out.push(violation(
            record,
            None,
            format!("task {} does not use reasoning steps but the record has some", record.task),
        ));
    }

    match record.task {
        TaskKind::DocumentDescription => verify_description(record, page, &mut out),
        TaskKind::TextBoxReconstruction => verify_reconstruction(record, page, &mut out),
        TaskKind::LayoutAnalysis => verify_layout(record, page, &mut out),
        TaskKind::TableAnalysis => verify_table(record, page, &mut out),
        TaskKind::MaskedLanguage => verify_masked_language(record, page, &mut out),
        TaskKind::MaskedPosition => verify_masked_position(record, page, &mut out),
        TaskKind::GeometricAnalysis => verify_geometric(record, page, &mut out),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cot::generators::*;
    use crate::cot::BoundValue;
    use crate::page::{ingest_page, RawLayout, RawPage, RawSegment};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn fixture_page() -> DocumentPage {
        let raw = RawPage {
            page_id: "fixture".to_string(),
            width: 1000.0,
            height: 1000.0,
            segments: vec![
                RawSegment { text: "Item".into(), bbox: [0.0, 0.0, 100.0, 50.0] },
                RawSegment { text: "Price".into(), bbox: [200.0, 0.0, 300.0, 50.0] },
                RawSegment { text: "Apple".into(), bbox: [0.0, 100.0, 100.0, 150.0] },
                RawSegment { text: "3".into(), bbox: [200.0, 100.0, 300.0, 150.0] },
                RawSegment { text: "Pear".into(), bbox: [0.0, 200.0, 100.0, 250.0] },
                RawSegment { text: "7".into(), bbox: [200.0, 200.0, 300.0, 250.0] },
            ],
            layout: Some(vec![
                RawLayout { bbox: [0.0, 0.0, 300.0, 50.0], layout_type: "Title".into() },
                RawLayout { bbox: [0.0, 100.0, 300.0, 250.0], layout_type: "Table".into() },
            ]),
            table: None,
            image: None,
        };
        ingest_page(&raw).unwrap().page
    }

    fn all_records(page: &DocumentPage) -> Vec<InstructionRecord> {
        let target = BBox::new(0, 100, 300, 250).unwrap();
        vec![
            gen_document_description(page, &mut rng(1), "d").unwrap(),
            gen_text_box_reconstruction(page, &mut rng(2), 3, "t").unwrap(),
            gen_layout_analysis(page, target, &mut rng(3), 2, "l").unwrap(),
            gen_table_analysis(page, 2, 1, &mut rng(4), 20, 50.0, "tb").unwrap(),
            gen_masked_language(page, &mut rng(5), 0.3, "ml").unwrap(),
            gen_masked_position(page, &mut rng(6), 0.3, "mp").unwrap(),
            gen_geometric_analysis(page, 0, 5, GeometricQuery::Distance, &mut rng(7), "g")
                .unwrap(),
        ]
    }

    #[test]
    fn clean_records_verify_for_all_seven_tasks() {
        let page = fixture_page();
        for record in all_records(&page) {
            let violations = verify_record(&record, &page);
            assert!(
                violations.is_empty(),
                "task {:?}: {:?}",
                record.task,
                violations
            );
        }
    }

    #[test]
    fn tampered_final_answer_is_caught_for_every_task() {
        let page = fixture_page();
        for mut record in all_records(&page) {
            record.final_answer = format!("{}!tampered", record.final_answer);
            let violations = verify_record(&record, &page);
            assert!(
                !violations.is_empty(),
                "task {:?} accepted a tampered answer",
                record.task
            );
        }
    }

    #[test]
    fn tampered_narration_cites_its_step() {
        let page = fixture_page();
        let record =
            gen_geometric_analysis(&page, 0, 5, GeometricQuery::Distance, &mut rng(7), "g")
                .unwrap();
        let mut tampered = record.clone();
        let steps = tampered.cot_steps.as_mut().unwrap();
        steps[1].narration.push_str(" with margin 99");
        let violations = verify_record(&tampered, &page);
        assert!(violations.iter().any(|v| v.step_no == Some(2)), "{violations:?}");
    }

    #[test]
    fn tampered_bound_value_cites_its_step() {
        let page = fixture_page();
        let target = BBox::new(0, 100, 300, 250).unwrap();
        let record = gen_layout_analysis(&page, target, &mut rng(3), 2, "l").unwrap();
        let mut tampered = record.clone();
        let steps = tampered.cot_steps.as_mut().unwrap();
        steps[2].bound_values.insert("overlap_area".to_string(), BoundValue::Int(1));
        let violations = verify_record(&tampered, &page);
        assert!(
            violations
                .iter()
                .any(|v| v.step_no == Some(3) && v.message.contains("overlap_area")),
            "{violations:?}"
        );
    }

    #[test]
    fn dropped_steps_are_caught() {
        let page = fixture_page();
        let mut record = gen_table_analysis(&page, 1, 2, &mut rng(4), 20, 50.0, "tb").unwrap();
        record.cot_steps = None;
        let violations = verify_record(&record, &page);
        assert!(violations.iter().any(|v| v.message.contains("requires reasoning steps")));
    }

    #[test]
    fn extra_steps_on_direct_task_are_caught() {
        let page = fixture_page();
        let mut record = gen_document_description(&page, &mut rng(1), "d").unwrap();
        record.cot_steps = Some(vec![CotStep {
            step_no: 1,
            narration: "Invented reasoning.".to_string(),
            bound_values: Default::default(),
        }]);
        let violations = verify_record(&record, &page);
        assert!(violations.iter().any(|v| v.message.contains("does not use reasoning steps")));
    }

    #[test]
    fn wrong_page_is_caught() {
        let page = fixture_page();
        let mut other = fixture_page();
        other.page_id = "other".to_string();
        let record = gen_document_description(&page, &mut rng(1), "d").unwrap();
        let violations = verify_record(&record, &other);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("references page"));
    }

    #[test]
    fn tampered_box_in_reconstruction_answer_is_caught() {
        let page = fixture_page();
        let mut record = gen_text_box_reconstruction(&page, &mut rng(2), 3, "t").unwrap();
        record.final_answer = record.final_answer.replacen("[0, ", "[1, ", 1);
        let violations = verify_record(&record, &page);
        assert!(violations.iter().any(|v| v.message.contains("matches no segment")));
    }

    #[test]
    fn tampered_masked_word_is_caught() {
        let page = fixture_page();
        let record = gen_masked_language(&page, &mut rng(5), 0.3, "ml").unwrap();
        let mut tampered = record.clone();
        let first_line = tampered.final_answer.lines().next().unwrap().to_string();
        let (sentinel, _) = first_line.split_once(": ").unwrap();
        tampered.final_answer = tampered
            .final_answer
            .replacen(&first_line, &format!("{sentinel}: wrongword"), 1);
        let violations = verify_record(&tampered, &page);
        assert!(
            violations.iter().any(|v| v.message.contains("does not reproduce")),
            "{violations:?}"
        );
    }

    #[test]
    fn swapped_masked_position_answer_is_caught() {
        let page = fixture_page();
        // Mask rate 0.5 on six segments essentially always masks at least
        // one; pick a seed with two or more masked and swap their answers.
        for seed in 0..100 {
            let record = gen_masked_position(&page, &mut rng(seed), 0.5, "mp").unwrap();
            let lines: Vec<&str> = record.final_answer.lines().collect();
            if lines.len() >= 2 && lines[0] != lines[1] {
                let mut tampered = record.clone();
                let mut swapped: Vec<&str> = lines.clone();
                swapped.swap(0, 1);
                tampered.final_answer = swapped.join("\n");
                let violations = verify_record(&tampered, &page);
                assert!(!violations.is_empty(), "seed {seed} accepted swapped boxes");
                return;
            }
        }
        panic!("no seed produced two distinct masked boxes");
    }

    #[test]
    fn provenance_mismatch_is_caught() {
        let page = fixture_page();
        let mut record = gen_table_analysis(&page, 1, 2, &mut rng(4), 20, 50.0, "tb").unwrap();
        record
            .metadata
            .insert("structure".to_string(), serde_json::json!("annotated"));
        let violations = verify_record(&record, &page);
        assert!(violations.iter().any(|v| v.message.contains("structure source")));
    }

    #[test]
    fn missing_metadata_is_caught() {
        let page = fixture_page();
        let mut record =
            gen_geometric_analysis(&page, 0, 5, GeometricQuery::Direction, &mut rng(8), "g")
                .unwrap();
        record.metadata.remove("idx_b");
        let violations = verify_record(&record, &page);
        assert!(violations.iter().any(|v| v.message.contains("idx_b")));
    }

    #[test]
    fn tampered_direction_answer_is_caught() {
        let page = fixture_page();
        let mut record =
            gen_geometric_analysis(&page, 0, 5, GeometricQuery::Direction, &mut rng(8), "g")
                .unwrap();
        record.final_answer = "above".to_string();
        let violations = verify_record(&record, &page);
        assert!(violations.iter().any(|v| v.message.contains("final answer")));
    }
}
