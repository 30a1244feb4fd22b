//! Canonical plan files: sorted keys, shortest round-trip floats, UTF-8, LF.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{write_atomic, DatasetIoError};
use crate::selection::{canonical_score, SelectionPlan};

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, sort_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Pretty-printed JSON with recursively sorted object keys and a trailing
/// newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, DatasetIoError> {
    let v = serde_json::to_value(value).map_err(|e| DatasetIoError::Serialize(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&sort_keys(v))
        .map_err(|e| DatasetIoError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn plan_to_string(plan: &SelectionPlan) -> Result<String, DatasetIoError> {
    to_canonical_json(plan)
}

fn check_plan(plan: &SelectionPlan) -> Result<(), String> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = plan.chosen.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(format!("id {dup:?} chosen twice"));
    }
    let counted: usize = plan.lang_counts.values().sum();
    if counted != plan.chosen.len() {
        return Err(format!(
            "lang_counts sum to {counted} but {} ids are chosen",
            plan.chosen.len()
        ));
    }
    if let Some(id) = plan.scores.keys().find(|id| !seen.contains(id.as_str())) {
        return Err(format!("score for unchosen id {id:?}"));
    }
    if let Some((id, v)) = plan.scores.iter().find(|(_, v)| !v.is_finite()) {
        return Err(format!("score for {id:?} is {v}"));
    }
    Ok(())
}

/// Parses a plan and brings scores to their canonical precision, so that
/// hand-edited files re-serialize canonically.
pub fn parse_plan(text: &str, path: &Path) -> Result<SelectionPlan, DatasetIoError> {
    let parse_err = |message: String| DatasetIoError::PlanParse {
        path: path.to_path_buf(),
        message,
    };
    let mut plan: SelectionPlan =
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    check_plan(&plan).map_err(parse_err)?;
    for v in plan.scores.values_mut() {
        *v = canonical_score(*v);
    }
    Ok(plan)
}

pub fn write_plan(plan: &SelectionPlan, path: &Path) -> Result<(), DatasetIoError> {
    check_plan(plan).map_err(|message| DatasetIoError::PlanParse {
        path: path.to_path_buf(),
        message,
    })?;
    write_atomic(path, plan_to_string(plan)?.as_bytes())
}

pub fn read_plan(path: &Path) -> Result<SelectionPlan, DatasetIoError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetIoError::io(path, e))?;
    parse_plan(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::Strategy;
    use crate::uncertainty::Scorer;

    fn plan() -> SelectionPlan {
        let mut p = SelectionPlan::empty(Strategy::KnnUncertainty, 2, 42, 2);
        p.chosen = vec!["z1".into(), "a7".into()];
        p.scores = [("z1".to_string(), -0.125), ("a7".to_string(), -0.5)].into();
        p.lang_counts = [("de".to_string(), 1), ("ur".to_string(), 1)].into();
        p.shortfall = false;
        p.k = Some(8);
        p.scorer = Some(Scorer::Margin);
        p
    }

    #[test]
    fn write_read_identity_and_stable_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_plan(&plan(), &a).unwrap();
        write_plan(&plan(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(read_plan(&a).unwrap(), plan());
        let text = fs::read_to_string(&a).unwrap();
        assert!(text.ends_with("}\n") && !text.contains('\r'));
        let keys: Vec<_> = text
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap().to_string())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn long_scores_are_canonicalized() {
        let text = plan_to_string(&plan())
            .unwrap()
            .replace("-0.125", "-0.12345678912345678912");
        let parsed = parse_plan(&text, Path::new("x")).unwrap();
        assert_eq!(parsed.scores["z1"], -0.123456789);
        let again = plan_to_string(&parsed).unwrap();
        assert!(again.contains("-0.123456789,") || again.contains("-0.123456789\n"));
        assert_eq!(parse_plan(&again, Path::new("x")).unwrap(), parsed);
    }

    #[test]
    fn rejects_inconsistent_plans() {
        let mut p = plan();
        p.chosen.push("z1".into());
        let text = serde_json::to_string(&p).unwrap();
        assert!(matches!(
            parse_plan(&text, Path::new("x")),
            Err(DatasetIoError::PlanParse { .. })
        ));
        assert!(parse_plan("{", Path::new("x")).is_err());
    }
}
