//! On-disk datasets and plans.
//!
//! A dataset directory holds `manifest.json` plus DMX tensor files:
//!
//! - `embeddings.dmx`: f32 `[rows, dim]`. Pooled datasets use one row per
//!   example; raw datasets store every token row and are pooled at load.
//! - `payload.dmx`: f32 `[rows, width]`. One row of class probabilities per
//!   sequence example, one row per token for token tasks, and one
//!   `(start, end)` log-probability row per position for span tasks.
//! - `alignments.dmx` (raw token datasets only): u32 `[n]` first-subword
//!   indices, relative to the example's first embedding row.
//!
//! Each manifest entry points at its rows through `{offset, len}` slices.

pub mod dmx;
pub mod plan;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    pool_representation, Dataset, Example, Matrix, ModelError, Role, TaskKind, UncertaintyPayload,
    WordAlignment,
};
use dmx::{read_tensor, write_tensor, Tensor};

pub use plan::{parse_plan, plan_to_string, read_plan, to_canonical_json, write_plan};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.dmx";
pub const PAYLOAD_FILE: &str = "payload.dmx";
pub const ALIGNMENTS_FILE: &str = "alignments.dmx";

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}: invalid manifest: {message}")]
    ManifestParse { file: String, message: String },
    #[error("{file}: bad magic bytes (expected DMX1)")]
    BadMagic { file: String },
    #[error("{file}: unsupported element type code {code}")]
    UnsupportedElementType { file: String, code: u32 },
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("{file}: truncated tensor ({found} bytes, expected {expected})")]
    TruncatedTensor {
        file: String,
        expected: u64,
        found: u64,
    },
    #[error("{file}: {found} bytes, expected exactly {expected}")]
    TrailingBytes {
        file: String,
        expected: u64,
        found: u64,
    },
    #[error("{file}: {detail}")]
    TensorShape { file: String, detail: String },
    #[error("example {id:?} violates rule {rule}: {detail}")]
    InvariantViolation {
        id: String,
        rule: &'static str,
        detail: String,
    },
    #[error("{path}: cannot parse plan: {message}")]
    PlanParse { path: PathBuf, message: String },
    #[error("cannot serialize: {0}")]
    Serialize(String),
}

impl DatasetIoError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DatasetIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Rule name for invariant violations, used by validation reports.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            DatasetIoError::InvariantViolation { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

fn from_model(err: ModelError, id: &str) -> DatasetIoError {
    match err {
        ModelError::InvariantViolation { id, rule, detail } => {
            DatasetIoError::InvariantViolation { id, rule, detail }
        }
        ModelError::MissingAlignment => DatasetIoError::InvariantViolation {
            id: id.to_string(),
            rule: "alignment",
            detail: "raw token example without alignment".into(),
        },
        ModelError::IndexOutOfRange { index, len } => DatasetIoError::InvariantViolation {
            id: id.to_string(),
            rule: "alignment",
            detail: format!("index {index} out of range for {len} tokens"),
        },
        other => DatasetIoError::InvariantViolation {
            id: id.to_string(),
            rule: "dim",
            detail: other.to_string(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slice {
    pub offset: u64,
    pub len: u64,
}

impl Slice {
    fn range(self) -> std::ops::Range<usize> {
        self.offset as usize..(self.offset + self.len) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFiles {
    pub embeddings: String,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignments: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub language: String,
    /// FNV-1a 64 content hash as 16 lowercase hex digits.
    pub text_hash: String,
    pub embedding: Slice,
    pub payload: Slice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<Slice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub dim: usize,
    pub pooled: bool,
    pub tensors: TensorFiles,
    pub examples: Vec<ManifestEntry>,
}

pub fn format_hash(h: u64) -> String {
    format!("{h:016x}")
}

pub fn parse_hash(s: &str) -> Option<u64> {
    if s.is_empty() || s.len() > 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

/// Writes via a sibling `.tmp` file and a rename, creating parent
/// directories as needed.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetIoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| DatasetIoError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| DatasetIoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DatasetIoError::io(path, e))
}

fn tensor_path(dir: &Path, name: &str) -> Result<PathBuf, DatasetIoError> {
    let p = Path::new(name);
    if name.is_empty()
        || p.is_absolute()
        || p.components()
            .any(|c| !matches!(c, std::path::Component::Normal(_)))
    {
        return Err(DatasetIoError::ManifestParse {
            file: MANIFEST_FILE.into(),
            message: format!("tensor reference {name:?} must be a plain relative path"),
        });
    }
    Ok(dir.join(p))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetIoError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DatasetIoError::io(&path, e))?;
    // version first, so a future layout reports VersionMismatch rather than a parse error
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| DatasetIoError::ManifestParse {
            file: MANIFEST_FILE.into(),
            message: e.to_string(),
        })?;
    match value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
    {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(DatasetIoError::VersionMismatch {
                found: u32::try_from(v).unwrap_or(u32::MAX),
            })
        }
        None => {
            return Err(DatasetIoError::ManifestParse {
                file: MANIFEST_FILE.into(),
                message: "missing integer format_version".into(),
            })
        }
    }
    serde_json::from_value(value).map_err(|e| DatasetIoError::ManifestParse {
        file: MANIFEST_FILE.into(),
        message: e.to_string(),
    })
}

struct Tensors {
    embeddings: Tensor,
    payload: Tensor,
    alignments: Option<Tensor>,
}

fn shape_error(file: &str, detail: impl Into<String>) -> DatasetIoError {
    DatasetIoError::TensorShape {
        file: file.to_string(),
        detail: detail.into(),
    }
}

fn load_tensors(dir: &Path, manifest: &Manifest) -> Result<Tensors, DatasetIoError> {
    let files = &manifest.tensors;
    let embeddings = read_tensor(&tensor_path(dir, &files.embeddings)?)?;
    if embeddings.as_f32().is_none() || embeddings.dims.len() != 2 {
        return Err(shape_error(&files.embeddings, "expected a 2-D f32 tensor"));
    }
    if embeddings.row_width() != manifest.dim {
        return Err(shape_error(
            &files.embeddings,
            format!(
                "row width {} but manifest dim is {}",
                embeddings.row_width(),
                manifest.dim
            ),
        ));
    }
    let payload = read_tensor(&tensor_path(dir, &files.payload)?)?;
    if payload.as_f32().is_none() || payload.dims.len() != 2 {
        return Err(shape_error(&files.payload, "expected a 2-D f32 tensor"));
    }
    if manifest.task == TaskKind::SpanQa && payload.row_width() != 2 && payload.rows() > 0 {
        return Err(shape_error(
            &files.payload,
            "span payload rows must hold (start, end)",
        ));
    }
    let alignments = match &files.alignments {
        Some(name) => {
            let t = read_tensor(&tensor_path(dir, name)?)?;
            if t.as_u32().is_none() || t.dims.len() != 1 {
                return Err(shape_error(name, "expected a 1-D u32 tensor"));
            }
            Some(t)
        }
        None => None,
    };
    Ok(Tensors {
        embeddings,
        payload,
        alignments,
    })
}

fn slice_rows<'a>(
    t: &'a Tensor,
    data: &'a [f32],
    s: Slice,
    id: &str,
    what: &str,
) -> Result<&'a [f32], DatasetIoError> {
    let end = s.offset.checked_add(s.len);
    if end.is_none_or(|e| e > t.rows() as u64) {
        return Err(DatasetIoError::InvariantViolation {
            id: id.to_string(),
            rule: "slice-bounds",
            detail: format!(
                "{what} rows {}..+{} outside tensor of {} rows",
                s.offset,
                s.len,
                t.rows()
            ),
        });
    }
    let w = t.row_width();
    Ok(&data[s.offset as usize * w..(s.offset + s.len) as usize * w])
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn build_example(
    manifest: &Manifest,
    entry: &ManifestEntry,
    tensors: &Tensors,
) -> Result<Example, DatasetIoError> {
    let id = entry.id.as_str();
    let violation = |rule, detail: String| DatasetIoError::InvariantViolation {
        id: id.to_string(),
        rule,
        detail,
    };
    let hash = parse_hash(&entry.text_hash).ok_or_else(|| {
        violation(
            "text-hash",
            format!("{:?} is not a hex u64", entry.text_hash),
        )
    })?;

    let emb = &tensors.embeddings;
    let emb_rows = slice_rows(emb, emb.as_f32().unwrap(), entry.embedding, id, "embedding")?;
    if entry.embedding.len == 0 {
        return Err(violation("slice-shape", "empty embedding slice".into()));
    }
    let representation = if manifest.pooled {
        if entry.embedding.len != 1 {
            return Err(violation(
                "slice-shape",
                format!("pooled example spans {} rows", entry.embedding.len),
            ));
        }
        widen(emb_rows)
    } else {
        let raw = Matrix::new(entry.embedding.len as usize, manifest.dim, widen(emb_rows))
            .map_err(|e| from_model(e, id))?;
        let align = match (manifest.task, entry.alignment) {
            (TaskKind::TokenLevel, Some(s)) => {
                let all = tensors
                    .alignments
                    .as_ref()
                    .ok_or_else(|| violation("alignment", "no alignments tensor".into()))?;
                if s.offset
                    .checked_add(s.len)
                    .is_none_or(|e| e > all.rows() as u64)
                {
                    return Err(violation(
                        "slice-bounds",
                        format!(
                            "alignment {}..+{} outside {} entries",
                            s.offset,
                            s.len,
                            all.rows()
                        ),
                    ));
                }
                let idx = all.as_u32().unwrap()[s.range()]
                    .iter()
                    .map(|&i| i as usize)
                    .collect();
                Some(WordAlignment::new(idx).map_err(|e| match e {
                    ModelError::EmptyInput => violation("alignment", "empty alignment".into()),
                    ModelError::InvariantViolation { rule, detail, .. } => violation(rule, detail),
                    other => from_model(other, id),
                })?)
            }
            _ => None,
        };
        pool_representation(&raw, manifest.task, align.as_ref()).map_err(|e| from_model(e, id))?
    };

    let pay = &tensors.payload;
    let rows = slice_rows(pay, pay.as_f32().unwrap(), entry.payload, id, "payload")?;
    let w = pay.row_width();
    let payload = match manifest.task {
        TaskKind::SequenceLevel => {
            if entry.payload.len != 1 {
                return Err(violation(
                    "slice-shape",
                    format!("sequence payload spans {} rows", entry.payload.len),
                ));
            }
            UncertaintyPayload::SeqProbs(widen(rows))
        }
        TaskKind::TokenLevel => {
            UncertaintyPayload::TokenProbs(rows.chunks_exact(w.max(1)).map(widen).collect())
        }
        TaskKind::SpanQa => {
            let (start, end) = rows
                .chunks_exact(2)
                .map(|c| (c[0] as f64, c[1] as f64))
                .unzip();
            UncertaintyPayload::SpanLogProbs { start, end }
        }
    };
    Example::new(
        entry.id.clone(),
        entry.language.clone(),
        hash,
        representation,
        payload,
    )
    .map_err(|e| from_model(e, id))
}

/// Loads and fully validates a dataset directory. The manifest's `role`
/// defaults to [`Role::Source`].
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetIoError> {
    let manifest = read_manifest(dir)?;
    let tensors = load_tensors(dir, &manifest)?;
    let examples = manifest
        .examples
        .iter()
        .map(|e| build_example(&manifest, e, &tensors))
        .collect::<Result<Vec<_>, _>>()?;
    let role = manifest.role.unwrap_or(Role::Source);
    Dataset::new(manifest.task, role, manifest.dim, examples).map_err(|e| from_model(e, ""))
}

/// [`read_dataset`] with the role forced to `role`.
pub fn read_dataset_as(dir: &Path, role: Role) -> Result<Dataset, DatasetIoError> {
    read_dataset(dir).map(|d| d.with_role(role))
}

/// Per-example invariant rules reported by [`validate_dataset`].
pub const EXAMPLE_RULES: &[&str] = &[
    "text-hash",
    "slice-bounds",
    "slice-shape",
    "alignment",
    "alignment-increasing",
    "dim",
    "finite",
    "min-classes",
    "prob-range",
    "prob-sum",
    "token-count",
    "token-width",
    "span-length",
    "log-prob-nonpositive",
];

pub const DATASET_RULES: &[&str] = &["unique-id", "payload-variant", "class-count"];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub dataset: Option<Dataset>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.dataset.is_some() && self.checks.iter().all(|c| c.passed)
    }

    fn pass(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed: true,
            detail: detail.into(),
        });
    }

    fn fail(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed: false,
            detail: detail.into(),
        });
    }
}

/// Runs every load-time check and reports each rule separately instead of
/// stopping at the first violation.
pub fn validate_dataset(dir: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = match read_manifest(dir) {
        Ok(m) => {
            report.pass("manifest", format!("{} entries", m.examples.len()));
            m
        }
        Err(e) => {
            report.fail("manifest", e.to_string());
            return report;
        }
    };
    let tensors = match load_tensors(dir, &manifest) {
        Ok(t) => {
            report.pass("tensors", "headers and sizes consistent");
            t
        }
        Err(e) => {
            report.fail("tensors", e.to_string());
            return report;
        }
    };
    let mut failures: BTreeMap<&'static str, (usize, String)> = BTreeMap::new();
    let mut examples = Vec::with_capacity(manifest.examples.len());
    for entry in &manifest.examples {
        match build_example(&manifest, entry, &tensors) {
            Ok(ex) => examples.push(ex),
            Err(e) => {
                let rule = e.rule().unwrap_or("example");
                let slot = failures.entry(rule).or_insert((0, e.to_string()));
                slot.0 += 1;
            }
        }
    }
    for &rule in EXAMPLE_RULES {
        match failures.remove(rule) {
            Some((n, first)) => report.fail(rule, format!("{n} example(s); first: {first}")),
            None => report.pass(rule, ""),
        }
    }
    for (rule, (n, first)) in failures {
        report.fail(rule, format!("{n} example(s); first: {first}"));
    }
    if !report.checks.iter().all(|c| c.passed) {
        return report;
    }
    let role = manifest.role.unwrap_or(Role::Source);
    match Dataset::new(manifest.task, role, manifest.dim, examples) {
        Ok(ds) => {
            for &rule in DATASET_RULES {
                report.pass(rule, "");
            }
            report.dataset = Some(ds);
        }
        Err(e) => {
            let err = from_model(e, "");
            let failed = err.rule().unwrap_or("dataset");
            for &rule in DATASET_RULES {
                if rule == failed {
                    report.fail(rule, err.to_string());
                } else {
                    report.pass(rule, "");
                }
            }
        }
    }
    report
}

/// Example with unpooled token embeddings, for raw-mode datasets.
#[derive(Clone, Debug)]
pub struct RawExample {
    pub id: String,
    pub language: String,
    pub text_hash: u64,
    pub token_embeddings: Matrix,
    pub alignment: Option<WordAlignment>,
    pub payload: UncertaintyPayload,
}

fn payload_rows(payload: &UncertaintyPayload) -> (usize, Vec<f32>) {
    match payload {
        UncertaintyPayload::SeqProbs(p) => (1, p.iter().map(|&x| x as f32).collect()),
        UncertaintyPayload::TokenProbs(rows) => (
            rows.len(),
            rows.iter().flatten().map(|&x| x as f32).collect(),
        ),
        UncertaintyPayload::SpanLogProbs { start, end } => (
            start.len(),
            start
                .iter()
                .zip(end)
                .flat_map(|(&s, &e)| [s as f32, e as f32])
                .collect(),
        ),
    }
}

fn payload_width(payload: &UncertaintyPayload) -> usize {
    match payload {
        UncertaintyPayload::SeqProbs(p) => p.len(),
        UncertaintyPayload::TokenProbs(rows) => rows.first().map_or(0, Vec::len),
        UncertaintyPayload::SpanLogProbs { .. } => 2,
    }
}

struct Pending {
    entries: Vec<ManifestEntry>,
    emb: Vec<f32>,
    emb_rows: u64,
    pay: Vec<f32>,
    pay_rows: u64,
    pay_width: Option<usize>,
    align: Vec<u32>,
}

impl Pending {
    fn new() -> Self {
        Pending {
            entries: Vec::new(),
            emb: Vec::new(),
            emb_rows: 0,
            pay: Vec::new(),
            pay_rows: 0,
            pay_width: None,
            align: Vec::new(),
        }
    }

    fn push(
        &mut self,
        id: &str,
        language: &str,
        text_hash: u64,
        emb_rows: &Matrix,
        alignment: Option<&WordAlignment>,
        payload: &UncertaintyPayload,
    ) -> Result<(), DatasetIoError> {
        let width = payload_width(payload);
        if *self.pay_width.get_or_insert(width) != width {
            return Err(DatasetIoError::InvariantViolation {
                id: id.to_string(),
                rule: "class-count",
                detail: format!("payload width {width} differs from earlier examples"),
            });
        }
        let embedding = Slice {
            offset: self.emb_rows,
            len: emb_rows.rows() as u64,
        };
        self.emb
            .extend(emb_rows.as_slice().iter().map(|&x| x as f32));
        self.emb_rows += emb_rows.rows() as u64;
        let (n, data) = payload_rows(payload);
        let payload_slice = Slice {
            offset: self.pay_rows,
            len: n as u64,
        };
        self.pay.extend(data);
        self.pay_rows += n as u64;
        let alignment = alignment.map(|a| {
            let s = Slice {
                offset: self.align.len() as u64,
                len: a.indices().len() as u64,
            };
            self.align.extend(a.indices().iter().map(|&i| i as u32));
            s
        });
        self.entries.push(ManifestEntry {
            id: id.to_string(),
            language: language.to_string(),
            text_hash: format_hash(text_hash),
            embedding,
            payload: payload_slice,
            alignment,
        });
        Ok(())
    }

    fn finish(
        self,
        dir: &Path,
        task: TaskKind,
        role: Role,
        dim: usize,
        pooled: bool,
    ) -> Result<(), DatasetIoError> {
        fs::create_dir_all(dir).map_err(|e| DatasetIoError::io(dir, e))?;
        let width = match task {
            TaskKind::SpanQa => 2,
            _ => self.pay_width.unwrap_or(0),
        };
        write_tensor(
            &dir.join(EMBEDDINGS_FILE),
            &Tensor::f32(vec![self.emb_rows, dim as u64], self.emb),
        )?;
        write_tensor(
            &dir.join(PAYLOAD_FILE),
            &Tensor::f32(vec![self.pay_rows, width as u64], self.pay),
        )?;
        let has_align = self.entries.iter().any(|e| e.alignment.is_some());
        if has_align {
            write_tensor(
                &dir.join(ALIGNMENTS_FILE),
                &Tensor::u32(vec![self.align.len() as u64], self.align),
            )?;
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            task,
            role: Some(role),
            dim,
            pooled,
            tensors: TensorFiles {
                embeddings: EMBEDDINGS_FILE.into(),
                payload: PAYLOAD_FILE.into(),
                alignments: has_align.then(|| ALIGNMENTS_FILE.to_string()),
            },
            examples: self.entries,
        };
        // manifest last: its presence marks the directory complete
        write_atomic(
            &dir.join(MANIFEST_FILE),
            to_canonical_json(&manifest)?.as_bytes(),
        )
    }
}

/// Writes `ds` as a pooled dataset directory.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetIoError> {
    let mut pending = Pending::new();
    for ex in ds.examples() {
        let row = Matrix::new(1, ds.dim(), ex.representation().to_vec())
            .map_err(|e| from_model(e, ex.id()))?;
        pending.push(
            ex.id(),
            ex.language(),
            ex.text_hash(),
            &row,
            None,
            ex.payload(),
        )?;
    }
    pending.finish(dir, ds.task(), ds.role(), ds.dim(), true)
}

/// Writes unpooled examples; the reader pools them with the task's rule.
pub fn write_raw_dataset(
    dir: &Path,
    task: TaskKind,
    role: Role,
    dim: usize,
    examples: &[RawExample],
) -> Result<(), DatasetIoError> {
    let mut pending = Pending::new();
    for ex in examples {
        if ex.token_embeddings.cols() != dim {
            return Err(DatasetIoError::InvariantViolation {
                id: ex.id.clone(),
                rule: "dim",
                detail: format!("{} columns, dim is {dim}", ex.token_embeddings.cols()),
            });
        }
        pending.push(
            &ex.id,
            &ex.language,
            ex.text_hash,
            &ex.token_embeddings,
            ex.alignment.as_ref(),
            &ex.payload,
        )?;
    }
    pending.finish(dir, task, role, dim, false)
}
