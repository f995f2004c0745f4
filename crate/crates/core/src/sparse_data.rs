//! Coalesced sparse multi-label datasets.
//!
//! A [`SparseBatch`] stores every example of a batch back to back: one
//! index array, one value array and an offsets array locating each example,
//! with labels kept the same way. Views over a contiguous range of examples
//! borrow the payload arrays without copying.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("line {line}: malformed token `{token}`")]
    Malformed { line: usize, token: String },
    #[error("line {line}: feature index {index} out of range for input_dim {dim}")]
    FeatureOutOfRange { line: usize, index: u64, dim: usize },
    #[error("line {line}: label {label} out of range for label_dim {dim}")]
    LabelOutOfRange { line: usize, label: u64, dim: usize },
    #[error("line {line}: duplicate feature index {index}")]
    DuplicateFeature { line: usize, index: u32 },
    #[error("line {line}: duplicate label {label}")]
    DuplicateLabel { line: usize, label: u32 },
    #[error("missing `num_examples input_dim label_dim` header line")]
    MissingHeader,
    #[error("line {line}: invalid header: {reason}")]
    BadHeader { line: usize, reason: String },
    #[error("header declares {expected} examples but {found} were read")]
    ExampleCount { expected: usize, found: usize },
    #[error("slice [{start}, {start}+{count}) out of bounds for {len} examples")]
    OutOfBounds { start: usize, count: usize, len: usize },
    #[error("invalid batch: {0}")]
    Invariant(&'static str),
}

/// Dataset dimensions, either read from the first line of a file or
/// supplied by configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub num_examples: usize,
    pub input_dim: usize,
    pub label_dim: usize,
}

impl DatasetHeader {
    pub fn new(num_examples: usize, input_dim: usize, label_dim: usize) -> Self {
        Self {
            num_examples,
            input_dim,
            label_dim,
        }
    }

    fn check_dims(&self) -> Result<(), &'static str> {
        if self.input_dim == 0 {
            return Err("input_dim must be positive");
        }
        if self.label_dim == 0 {
            return Err("label_dim must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Feature indices and labels in the file start at 1.
    pub one_based: bool,
}

/// One example borrowed from a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f32],
    pub labels: &'a [u32],
}

impl Example<'_> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Random access to examples, whatever the backing layout.
pub trait Examples {
    fn len(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn label_dim(&self) -> usize;
    fn example(&self, i: usize) -> Example<'_>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseBatch {
    indices: Vec<u32>,
    values: Vec<f32>,
    offsets: Vec<usize>,
    label_indices: Vec<u32>,
    label_offsets: Vec<usize>,
    input_dim: usize,
    label_dim: usize,
}

fn check_csr(
    idx: &[u32],
    offsets: &[usize],
    dim: usize,
    what: &'static str,
) -> Result<(), &'static str> {
    if offsets.first() != Some(&0) {
        return Err(what);
    }
    if *offsets.last().unwrap() != idx.len() {
        return Err(what);
    }
    for w in offsets.windows(2) {
        if w[0] > w[1] {
            return Err(what);
        }
        let row = &idx[w[0]..w[1]];
        if row.iter().any(|&i| i as usize >= dim) {
            return Err(what);
        }
        if row.windows(2).any(|p| p[0] >= p[1]) {
            return Err(what);
        }
    }
    Ok(())
}

impl SparseBatch {
    /// Assemble a batch from raw coalesced arrays, checking every layout
    /// invariant.
    pub fn from_parts(
        indices: Vec<u32>,
        values: Vec<f32>,
        offsets: Vec<usize>,
        label_indices: Vec<u32>,
        label_offsets: Vec<usize>,
        input_dim: usize,
        label_dim: usize,
    ) -> Result<Self, DataError> {
        DatasetHeader::new(0, input_dim, label_dim)
            .check_dims()
            .map_err(DataError::Invariant)?;
        if values.len() != indices.len() {
            return Err(DataError::Invariant("values and indices differ in length"));
        }
        if offsets.len() != label_offsets.len() {
            return Err(DataError::Invariant(
                "feature and label offsets describe different example counts",
            ));
        }
        check_csr(&indices, &offsets, input_dim, "feature offsets/indices")
            .map_err(DataError::Invariant)?;
        check_csr(&label_indices, &label_offsets, label_dim, "label offsets/indices")
            .map_err(DataError::Invariant)?;
        Ok(Self {
            indices,
            values,
            offsets,
            label_indices,
            label_offsets,
            input_dim,
            label_dim,
        })
    }

    pub fn empty(input_dim: usize, label_dim: usize) -> Result<Self, DataError> {
        Self::from_parts(
            Vec::new(),
            Vec::new(),
            alloc::vec![0],
            Vec::new(),
            alloc::vec![0],
            input_dim,
            label_dim,
        )
    }

    pub fn num_examples(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn label_indices(&self) -> &[u32] {
        &self.label_indices
    }

    pub fn label_offsets(&self) -> &[usize] {
        &self.label_offsets
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader::new(self.num_examples(), self.input_dim, self.label_dim)
    }

    pub fn view(&self) -> SparseBatchView<'_> {
        SparseBatchView {
            owner: self,
            start: 0,
            count: self.num_examples(),
        }
    }

    /// Examples `[start, start + count)` as a zero-copy view.
    pub fn slice(&self, start: usize, count: usize) -> Result<SparseBatchView<'_>, DataError> {
        let len = self.num_examples();
        match start.checked_add(count) {
            Some(end) if end <= len => Ok(SparseBatchView {
                owner: self,
                start,
                count,
            }),
            _ => Err(DataError::OutOfBounds { start, count, len }),
        }
    }

    /// Copy every example into its own independently allocated arrays.
    pub fn fragmented_copy(&self) -> FragmentedBatch {
        let examples = (0..self.num_examples())
            .map(|i| {
                let ex = self.example(i);
                FragmentedExample {
                    indices: ex.indices.to_vec(),
                    values: ex.values.to_vec(),
                    labels: ex.labels.to_vec(),
                }
            })
            .collect();
        FragmentedBatch {
            examples,
            input_dim: self.input_dim,
            label_dim: self.label_dim,
        }
    }

    /// Concatenate views (possibly of different batches with equal dims).
    pub fn concat(parts: &[SparseBatchView<'_>]) -> Result<Self, DataError> {
        let (input_dim, label_dim) = match parts.first() {
            Some(p) => (p.input_dim(), p.label_dim()),
            None => return Err(DataError::Invariant("nothing to concatenate")),
        };
        let mut builder = BatchBuilder::new(input_dim, label_dim);
        for part in parts {
            if part.input_dim() != input_dim || part.label_dim() != label_dim {
                return Err(DataError::Invariant("concatenated parts differ in dimensions"));
            }
            for i in 0..part.len() {
                builder.push_canonical(part.example(i));
            }
        }
        builder.finish()
    }

    /// Serialize in the multi-label text format accepted by
    /// [`parse_libsvm_multilabel`], optionally with a header line.
    pub fn write_libsvm(&self, with_header: bool, opts: ParseOptions) -> String {
        let mut out = String::new();
        let shift = opts.one_based as u32;
        if with_header {
            let _ = writeln!(
                out,
                "{} {} {}",
                self.num_examples(),
                self.input_dim,
                self.label_dim
            );
        }
        for i in 0..self.num_examples() {
            let ex = self.example(i);
            for (k, l) in ex.labels.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", l + shift);
            }
            for (j, v) in ex.indices.iter().zip(ex.values) {
                let _ = write!(out, " {}:{}", j + shift, v);
            }
            out.push('\n');
        }
        out
    }
}

impl Examples for SparseBatch {
    fn len(&self) -> usize {
        self.num_examples()
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn label_dim(&self) -> usize {
        self.label_dim
    }

    #[inline]
    fn example(&self, i: usize) -> Example<'_> {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        let (la, lb) = (self.label_offsets[i], self.label_offsets[i + 1]);
        Example {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
            labels: &self.label_indices[la..lb],
        }
    }
}

/// Zero-copy window over consecutive examples of a [`SparseBatch`].
///
/// Offsets are re-based on the fly: `offset(0) == 0` and
/// `offset(len) == indices().len()` hold for every view.
#[derive(Debug, Clone, Copy)]
pub struct SparseBatchView<'a> {
    owner: &'a SparseBatch,
    start: usize,
    count: usize,
}

impl<'a> SparseBatchView<'a> {
    pub fn start(&self) -> usize {
        self.start
    }

    fn base(&self) -> usize {
        self.owner.offsets[self.start]
    }

    /// Re-based feature offset of example `k` (`k <= len`).
    pub fn offset(&self, k: usize) -> usize {
        self.owner.offsets[self.start + k] - self.base()
    }

    pub fn label_offset(&self, k: usize) -> usize {
        self.owner.label_offsets[self.start + k] - self.owner.label_offsets[self.start]
    }

    pub fn indices(&self) -> &'a [u32] {
        &self.owner.indices[self.base()..self.owner.offsets[self.start + self.count]]
    }

    pub fn values(&self) -> &'a [f32] {
        &self.owner.values[self.base()..self.owner.offsets[self.start + self.count]]
    }

    pub fn label_indices(&self) -> &'a [u32] {
        let lo = &self.owner.label_offsets;
        &self.owner.label_indices[lo[self.start]..lo[self.start + self.count]]
    }

    /// True when this view's payload lies inside `batch`'s arrays, i.e. no
    /// copy was made.
    pub fn shares_payload_with(&self, batch: &SparseBatch) -> bool {
        let inside = |sub: &[u32], whole: &[u32]| {
            let range = whole.as_ptr_range();
            let s = sub.as_ptr_range();
            range.start <= s.start && s.end <= range.end
        };
        let vals = batch.values.as_ptr_range();
        let v = self.values().as_ptr_range();
        inside(self.indices(), &batch.indices)
            && inside(self.label_indices(), &batch.label_indices)
            && vals.start <= v.start
            && v.end <= vals.end
    }

    pub fn slice(&self, start: usize, count: usize) -> Result<SparseBatchView<'a>, DataError> {
        match start.checked_add(count) {
            Some(end) if end <= self.count => Ok(SparseBatchView {
                owner: self.owner,
                start: self.start + start,
                count,
            }),
            _ => Err(DataError::OutOfBounds {
                start,
                count,
                len: self.count,
            }),
        }
    }

    pub fn to_batch(&self) -> SparseBatch {
        // The owner was validated, so any contiguous window is valid too.
        SparseBatch::concat(core::slice::from_ref(self)).expect("view of a valid batch")
    }
}

impl Examples for SparseBatchView<'_> {
    fn len(&self) -> usize {
        self.count
    }

    fn input_dim(&self) -> usize {
        self.owner.input_dim
    }

    fn label_dim(&self) -> usize {
        self.owner.label_dim
    }

    #[inline]
    fn example(&self, i: usize) -> Example<'_> {
        assert!(i < self.count, "example {i} out of view of {}", self.count);
        self.owner.example(self.start + i)
    }
}

impl PartialEq<SparseBatch> for SparseBatchView<'_> {
    fn eq(&self, other: &SparseBatch) -> bool {
        self.len() == other.len()
            && self.input_dim() == other.input_dim
            && self.label_dim() == other.label_dim
            && (0..self.len()).all(|i| self.example(i) == other.example(i))
    }
}

/// The per-example-allocation layout, kept for the memory layout benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentedExample {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentedBatch {
    pub examples: Vec<FragmentedExample>,
    pub input_dim: usize,
    pub label_dim: usize,
}

impl FragmentedBatch {
    pub fn to_coalesced(&self) -> Result<SparseBatch, DataError> {
        let mut builder = BatchBuilder::new(self.input_dim, self.label_dim);
        for ex in &self.examples {
            builder.push_canonical(Example {
                indices: &ex.indices,
                values: &ex.values,
                labels: &ex.labels,
            });
        }
        builder.finish()
    }
}

impl Examples for FragmentedBatch {
    fn len(&self) -> usize {
        self.examples.len()
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn label_dim(&self) -> usize {
        self.label_dim
    }

    #[inline]
    fn example(&self, i: usize) -> Example<'_> {
        let ex = &self.examples[i];
        Example {
            indices: &ex.indices,
            values: &ex.values,
            labels: &ex.labels,
        }
    }
}

/// Incremental construction of a coalesced batch.
#[derive(Debug, Clone)]
pub struct BatchBuilder {
    batch: SparseBatch,
    pairs: Vec<(u32, f32)>,
}

impl BatchBuilder {
    pub fn new(input_dim: usize, label_dim: usize) -> Self {
        Self {
            batch: SparseBatch {
                indices: Vec::new(),
                values: Vec::new(),
                offsets: alloc::vec![0],
                label_indices: Vec::new(),
                label_offsets: alloc::vec![0],
                input_dim,
                label_dim,
            },
            pairs: Vec::new(),
        }
    }

    fn push_canonical(&mut self, ex: Example<'_>) {
        let b = &mut self.batch;
        b.indices.extend_from_slice(ex.indices);
        b.values.extend_from_slice(ex.values);
        b.offsets.push(b.indices.len());
        b.label_indices.extend_from_slice(ex.labels);
        b.label_offsets.push(b.label_indices.len());
    }

    /// Append one example given in any feature/label order. Indices are
    /// sorted; duplicates and out-of-range ids are rejected. `line` is only
    /// used for error reporting.
    pub fn push(
        &mut self,
        features: &[(u32, f32)],
        labels: &[u32],
        line: usize,
    ) -> Result<(), DataError> {
        let (input_dim, label_dim) = (self.batch.input_dim, self.batch.label_dim);
        self.pairs.clear();
        self.pairs.extend_from_slice(features);
        self.pairs.sort_unstable_by_key(|p| p.0);
        for w in self.pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DataError::DuplicateFeature { line, index: w[0].0 });
            }
        }
        if let Some(&(j, _)) = self.pairs.iter().find(|p| p.0 as usize >= input_dim) {
            return Err(DataError::FeatureOutOfRange {
                line,
                index: j as u64,
                dim: input_dim,
            });
        }
        let start = self.batch.label_indices.len();
        self.batch.label_indices.extend_from_slice(labels);
        let new_labels = &mut self.batch.label_indices[start..];
        new_labels.sort_unstable();
        let mut err = None;
        for w in new_labels.windows(2) {
            if w[0] == w[1] {
                err = Some(DataError::DuplicateLabel { line, label: w[0] });
                break;
            }
        }
        if err.is_none() {
            if let Some(&l) = new_labels.iter().find(|&&l| l as usize >= label_dim) {
                err = Some(DataError::LabelOutOfRange {
                    line,
                    label: l as u64,
                    dim: label_dim,
                });
            }
        }
        if let Some(e) = err {
            self.batch.label_indices.truncate(start);
            return Err(e);
        }
        let b = &mut self.batch;
        b.indices.extend(self.pairs.iter().map(|p| p.0));
        b.values.extend(self.pairs.iter().map(|p| p.1));
        b.offsets.push(b.indices.len());
        b.label_offsets.push(b.label_indices.len());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.batch.num_examples()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn finish(self) -> Result<SparseBatch, DataError> {
        let b = self.batch;
        let batch = SparseBatch::from_parts(
            b.indices,
            b.values,
            b.offsets,
            b.label_indices,
            b.label_offsets,
            b.input_dim,
            b.label_dim,
        )?;
        Ok(batch)
    }
}

fn parse_index(tok: &str, line: usize, shift: u64) -> Result<u64, DataError> {
    let raw: u64 = tok.parse().map_err(|_| DataError::Malformed {
        line,
        token: tok.to_string(),
    })?;
    raw.checked_sub(shift).ok_or_else(|| DataError::Malformed {
        line,
        token: tok.to_string(),
    })
}

fn parse_header_line(line_no: usize, line: &str) -> Option<Result<DatasetHeader, DataError>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 3 || toks.iter().any(|t| t.contains(':') || t.contains(',')) {
        return None;
    }
    let mut nums = [0usize; 3];
    for (slot, tok) in nums.iter_mut().zip(&toks) {
        match tok.parse() {
            Ok(v) => *slot = v,
            Err(_) => return None,
        }
    }
    let header = DatasetHeader::new(nums[0], nums[1], nums[2]);
    Some(match header.check_dims() {
        Ok(()) => Ok(header),
        Err(reason) => Err(DataError::BadHeader {
            line: line_no,
            reason: reason.to_string(),
        }),
    })
}

/// Parse multi-label sparse text (`l1,l2,... i1:v1 i2:v2 ...`, one example
/// per line).
///
/// When `header` is `None` the first line must be
/// `num_examples input_dim label_dim`. A header line present in the text is
/// also accepted when `header` is given, as long as the dimensions agree.
/// The next `num_examples` lines are the examples; a blank line among them
/// is an example with no labels and no features. Lines after those must be
/// blank. Line numbers in errors are 1-based.
pub fn parse_libsvm_multilabel(
    text: &str,
    header: Option<DatasetHeader>,
    opts: ParseOptions,
) -> Result<SparseBatch, DataError> {
    let shift = opts.one_based as u64;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .peekable();

    let in_file = match lines.peek() {
        Some(&(no, l)) => match parse_header_line(no, l) {
            Some(h) => {
                lines.next();
                Some(h?)
            }
            None => None,
        },
        None => None,
    };
    let header = match (header, in_file) {
        (Some(cfg), Some(file)) => {
            if cfg.input_dim != file.input_dim || cfg.label_dim != file.label_dim {
                return Err(DataError::BadHeader {
                    line: 1,
                    reason: "dimensions disagree with the configured header".to_string(),
                });
            }
            file
        }
        (Some(cfg), None) => cfg,
        (None, Some(file)) => file,
        (None, None) => return Err(DataError::MissingHeader),
    };
    header.check_dims().map_err(DataError::Invariant)?;

    let mut builder = BatchBuilder::new(header.input_dim, header.label_dim);
    let mut features: Vec<(u32, f32)> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for (line_no, line) in lines.by_ref().take(header.num_examples) {
        features.clear();
        labels.clear();
        let mut toks = line.split_whitespace().peekable();
        if let Some(first) = toks.peek() {
            if !first.contains(':') {
                let first = toks.next().unwrap();
                for l in first.split(',') {
                    let label = parse_index(l, line_no, shift)?;
                    if label >= header.label_dim as u64 {
                        return Err(DataError::LabelOutOfRange {
                            line: line_no,
                            label,
                            dim: header.label_dim,
                        });
                    }
                    labels.push(label as u32);
                }
            }
        }
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| DataError::Malformed {
                line: line_no,
                token: tok.to_string(),
            })?;
            let index = parse_index(i, line_no, shift)?;
            if index >= header.input_dim as u64 {
                return Err(DataError::FeatureOutOfRange {
                    line: line_no,
                    index,
                    dim: header.input_dim,
                });
            }
            let value: f32 = v.parse().map_err(|_| DataError::Malformed {
                line: line_no,
                token: tok.to_string(),
            })?;
            features.push((index as u32, value));
        }
        builder.push(&features, &labels, line_no)?;
    }
    let extra = lines.filter(|(_, l)| !l.is_empty()).count();
    if builder.len() != header.num_examples || extra > 0 {
        return Err(DataError::ExampleCount {
            expected: header.num_examples,
            found: builder.len() + extra,
        });
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn dims(n: usize) -> Option<DatasetHeader> {
        Some(DatasetHeader::new(n, 4, 4))
    }

    #[test]
    fn empty_text_gives_empty_batch() {
        let b = parse_libsvm_multilabel("", dims(0), ParseOptions::default()).unwrap();
        assert_eq!(b.offsets(), &[0]);
        assert!(b.indices().is_empty() && b.values().is_empty());
        assert_eq!(b.label_offsets(), &[0]);
    }

    #[test]
    fn single_example() {
        let b = parse_libsvm_multilabel("3 0:1.0", dims(1), ParseOptions::default()).unwrap();
        assert_eq!(b.indices(), &[0]);
        assert_eq!(b.values(), &[1.0]);
        assert_eq!(b.offsets(), &[0, 1]);
        assert_eq!(b.label_indices(), &[3]);
        assert_eq!(b.label_offsets(), &[0, 1]);
    }

    #[test]
    fn unsorted_indices_are_canonicalized() {
        let b = parse_libsvm_multilabel("2,0 3:0.5 1:2 0:-1", dims(1), ParseOptions::default())
            .unwrap();
        assert_eq!(b.indices(), &[0, 1, 3]);
        assert_eq!(b.values(), &[-1.0, 2.0, 0.5]);
        assert_eq!(b.label_indices(), &[0, 2]);
    }

    #[test]
    fn header_line_in_text() {
        let b = parse_libsvm_multilabel("2 4 4\n1 0:1\n 2:3\n", None, ParseOptions::default())
            .unwrap();
        assert_eq!(b.num_examples(), 2);
        assert_eq!(b.example(1).labels, &[] as &[u32]);
        assert_eq!(b.example(1).indices, &[2]);
    }

    #[test]
    fn missing_header_is_an_error() {
        let err = parse_libsvm_multilabel("1 0:1", None, ParseOptions::default()).unwrap_err();
        assert_eq!(err, DataError::MissingHeader);
    }

    #[test]
    fn example_count_must_match() {
        let err = parse_libsvm_multilabel("3 0:1", dims(2), ParseOptions::default()).unwrap_err();
        assert_eq!(err, DataError::ExampleCount { expected: 2, found: 1 });
    }

    #[test]
    fn blank_line_is_an_empty_example() {
        let b = parse_libsvm_multilabel("1 0:1\n\n2 1:3\n\n", dims(3), ParseOptions::default()).unwrap();
        assert_eq!(b.offsets(), &[0, 1, 1, 2]);
        assert_eq!(b.label_offsets(), &[0, 1, 1, 2]);
        let err = parse_libsvm_multilabel("1 0:1\n2 1:3\n", dims(1), ParseOptions::default()).unwrap_err();
        assert_eq!(err, DataError::ExampleCount { expected: 1, found: 2 });
    }

    #[test]
    fn malformed_token_reports_line() {
        let text = "1 0:1\n\n2 1:x\n";
        let err = parse_libsvm_multilabel(text, dims(3), ParseOptions::default()).unwrap_err();
        assert_eq!(
            err,
            DataError::Malformed {
                line: 3,
                token: "1:x".into()
            }
        );
        let err = parse_libsvm_multilabel("1 0-1", dims(1), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }));
    }

    #[test]
    fn range_errors() {
        let err = parse_libsvm_multilabel("1 4:1", dims(1), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::FeatureOutOfRange { index: 4, .. }));
        let err = parse_libsvm_multilabel("9 0:1", dims(1), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::LabelOutOfRange { label: 9, .. }));
    }

    #[test]
    fn duplicates_are_rejected() {
        let err =
            parse_libsvm_multilabel("1 2:1 2:3", dims(1), ParseOptions::default()).unwrap_err();
        assert_eq!(err, DataError::DuplicateFeature { line: 1, index: 2 });
        let err = parse_libsvm_multilabel("1,1 2:1", dims(1), ParseOptions::default()).unwrap_err();
        assert_eq!(err, DataError::DuplicateLabel { line: 1, label: 1 });
    }

    #[test]
    fn one_based_files_are_normalized() {
        let opts = ParseOptions { one_based: true };
        let b = parse_libsvm_multilabel("4 1:1.5 4:2", dims(1), opts).unwrap();
        assert_eq!(b.indices(), &[0, 3]);
        assert_eq!(b.label_indices(), &[3]);
        let err = parse_libsvm_multilabel("1 0:1", dims(1), opts).unwrap_err();
        assert!(matches!(err, DataError::Malformed { .. }));
        assert_eq!(parse_libsvm_multilabel(&b.write_libsvm(false, opts), dims(1), opts), Ok(b));
    }

    #[test]
    fn from_parts_checks_invariants() {
        let bad = SparseBatch::from_parts(vec![1, 0], vec![1.0, 1.0], vec![0, 2], vec![], vec![0, 0], 4, 4);
        assert!(bad.is_err());
        let bad = SparseBatch::from_parts(vec![5], vec![1.0], vec![0, 1], vec![], vec![0, 0], 4, 4);
        assert!(bad.is_err());
        let bad = SparseBatch::from_parts(vec![1], vec![1.0], vec![1, 1], vec![], vec![0, 0], 4, 4);
        assert!(bad.is_err());
    }

    fn sample() -> SparseBatch {
        let text = "0 0:1 2:2\n1,2 1:3\n3 0:4 1:5 3:6\n 2:7\n";
        parse_libsvm_multilabel(text, dims(4), ParseOptions::default()).unwrap()
    }

    #[test]
    fn slices_are_rebased_views() {
        let b = sample();
        let v = b.slice(1, 2).unwrap();
        assert_eq!(v.offset(0), 0);
        assert_eq!(v.offset(2), v.indices().len());
        assert_eq!(v.indices(), &[1, 0, 1, 3]);
        assert_eq!(v.label_indices(), &[1, 2, 3]);
        assert!(v.shares_payload_with(&b));
        assert_eq!(v.example(1).indices, b.example(2).indices);
        assert!(b.view() == b);
        assert_eq!(
            b.slice(3, 2).unwrap_err(),
            DataError::OutOfBounds { start: 3, count: 2, len: 4 }
        );
        assert!(b.slice(4, 0).unwrap().is_empty());
    }

    #[test]
    fn fragmented_copy_round_trip() {
        let b = sample();
        let f = b.fragmented_copy();
        assert_eq!(f.examples.len(), 4);
        assert_eq!(f.to_coalesced().unwrap(), b);
        let empty = SparseBatch::empty(4, 4).unwrap();
        assert!(empty.fragmented_copy().examples.is_empty());
    }
}
