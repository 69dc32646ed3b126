//! Token-level embedding records, vocabularies, IDF tables and the binary
//! embedding file format.
//!
//! Embedding file layout (all integers little-endian):
//!
//! ```text
//! "LTIE" | u32 version=1 | u32 h | u32 h_cls | u8 dtype (0=f32, 1=f16) | u64 count
//! per record: u64 id | u32 n | n x u32 token ids | n*h scalars (row-major) | h_cls scalars
//! ```
//!
//! The same layout is used for documents and queries. All arithmetic happens in
//! `f32`; half precision only exists on disk.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::{self, ByteReader};

pub const MAGIC: &[u8; 4] = b"LTIE";
pub const FORMAT_VERSION: u32 = 1;

/// Index into a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Token surface forms plus special-token and stop-word flags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    special: Vec<bool>,
    stopword: Vec<bool>,
}

impl Vocabulary {
    /// A vocabulary of `size` anonymous tokens with no flags set.
    pub fn new(size: usize) -> Self {
        Self {
            surfaces: vec![String::new(); size],
            special: vec![false; size],
            stopword: vec![false; size],
        }
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn contains(&self, t: TokenId) -> bool {
        t.index() < self.len()
    }

    pub fn surface(&self, t: TokenId) -> Option<&str> {
        self.surfaces.get(t.index()).map(String::as_str)
    }

    pub fn is_special(&self, t: TokenId) -> bool {
        self.special.get(t.index()).copied().unwrap_or(false)
    }

    pub fn is_stopword(&self, t: TokenId) -> bool {
        self.stopword.get(t.index()).copied().unwrap_or(false)
    }

    pub fn set_surface(&mut self, t: TokenId, surface: impl Into<String>) -> Result<()> {
        self.check(t)?;
        self.surfaces[t.index()] = surface.into();
        Ok(())
    }

    pub fn set_special(&mut self, t: TokenId, flag: bool) -> Result<()> {
        self.check(t)?;
        self.special[t.index()] = flag;
        Ok(())
    }

    pub fn set_stopword(&mut self, t: TokenId, flag: bool) -> Result<()> {
        self.check(t)?;
        self.stopword[t.index()] = flag;
        Ok(())
    }

    pub fn special_ids(&self) -> BTreeSet<TokenId> {
        flagged(&self.special)
    }

    pub fn stopword_ids(&self) -> BTreeSet<TokenId> {
        flagged(&self.stopword)
    }

    pub fn check(&self, t: TokenId) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::Vocabulary(format!(
                "token id {t} outside vocabulary of size {}",
                self.len()
            )))
        }
    }

    /// Parses the `id<TAB>surface<TAB>flags` sidecar format. Ids may be sparse;
    /// the vocabulary size is one past the largest id seen.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut max_id: Option<u32> = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected id<TAB>surface<TAB>flags".into()))?;
            let (surface, flags) = rest
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("missing flags column".into()))?;
            let id: u32 = id
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad token id {id:?}: {e}")))?;
            let (special, stop) = match flags.trim() {
                "-" => (false, false),
                "S" => (true, false),
                "W" => (false, true),
                "SW" | "WS" => (true, true),
                other => return Err(parse_err(format!("unknown flags {other:?}"))),
            };
            max_id = Some(max_id.map_or(id, |m| m.max(id)));
            rows.push((id, surface.to_string(), special, stop));
        }
        let mut vocab = Vocabulary::new(max_id.map_or(0, |m| m as usize + 1));
        for (id, surface, special, stop) in rows {
            let i = id as usize;
            vocab.surfaces[i] = surface;
            vocab.special[i] = special;
            vocab.stopword[i] = stop;
        }
        Ok(vocab)
    }

    pub fn to_sidecar(&self) -> Result<String> {
        let mut out = String::new();
        for i in 0..self.len() {
            let surface = &self.surfaces[i];
            if surface.contains(['\t', '\n', '\r']) {
                return Err(Error::Vocabulary(format!(
                    "surface of token {i} contains a tab or newline"
                )));
            }
            let flags = match (self.special[i], self.stopword[i]) {
                (false, false) => "-",
                (true, false) => "S",
                (false, true) => "W",
                (true, true) => "SW",
            };
            out.push_str(&format!("{i}\t{surface}\t{flags}\n"));
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&io_util::read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_file(path.as_ref(), self.to_sidecar()?.as_bytes())
    }
}

fn flagged(flags: &[bool]) -> BTreeSet<TokenId> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| TokenId(i as u32))
        .collect()
}

/// Borrowed view over a token sequence and its `n x dim` row-major embeddings.
#[derive(Debug, Clone, Copy)]
pub struct TokenMatrix<'a> {
    pub token_ids: &'a [TokenId],
    pub data: &'a [f32],
    pub dim: usize,
    pub summary: Option<&'a [f32]>,
}

impl<'a> TokenMatrix<'a> {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn row(&self, j: usize) -> &'a [f32] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &'a [f32]> + 'a {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Anything that can be viewed as a token matrix.
pub trait AsTokenMatrix {
    fn as_matrix(&self) -> TokenMatrix<'_>;
}

impl AsTokenMatrix for TokenMatrix<'_> {
    fn as_matrix(&self) -> TokenMatrix<'_> {
        *self
    }
}

/// One document or query: ordered token ids, one embedding row per token and an
/// optional summary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub id: u64,
    token_ids: Vec<TokenId>,
    data: Vec<f32>,
    dim: usize,
    summary: Option<Vec<f32>>,
}

/// Document-side record.
pub type DocEmbeddingSet = TokenEmbeddings;
/// Query-side record. Same shape constraints as documents.
pub type QueryEmbeddingSet = TokenEmbeddings;

impl TokenEmbeddings {
    pub fn new(id: u64, token_ids: Vec<TokenId>, data: Vec<f32>, dim: usize) -> Result<Self> {
        if token_ids.is_empty() {
            return Err(Error::Shape(format!("record {id} has no tokens")));
        }
        if dim == 0 {
            return Err(Error::Shape(format!("record {id} has zero dimension")));
        }
        if data.len() != token_ids.len() * dim {
            return Err(Error::Shape(format!(
                "record {id}: {} values for {} tokens of dimension {dim}",
                data.len(),
                token_ids.len()
            )));
        }
        if let Some(j) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "record {id}: non-finite value in row {}",
                j / dim
            )));
        }
        Ok(Self {
            id,
            token_ids,
            data,
            dim,
            summary: None,
        })
    }

    pub fn with_summary(mut self, summary: Vec<f32>) -> Result<Self> {
        if summary.is_empty() {
            return Err(Error::Shape(format!(
                "record {}: empty summary vector",
                self.id
            )));
        }
        if summary.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "record {}: non-finite summary vector",
                self.id
            )));
        }
        self.summary = Some(summary);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_ids(&self) -> &[TokenId] {
        &self.token_ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, j: usize) -> &[f32] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn summary(&self) -> Option<&[f32]> {
        self.summary.as_deref()
    }

    pub fn take_summary(&mut self) -> Option<Vec<f32>> {
        self.summary.take()
    }

    /// Copy of the record restricted to `positions` (in the given order).
    /// The summary vector is carried over.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let mut token_ids = Vec::with_capacity(positions.len());
        let mut data = Vec::with_capacity(positions.len() * self.dim);
        for &p in positions {
            if p >= self.len() {
                return Err(Error::Shape(format!(
                    "record {}: position {p} out of range for length {}",
                    self.id,
                    self.len()
                )));
            }
            token_ids.push(self.token_ids[p]);
            data.extend_from_slice(self.row(p));
        }
        let mut out = Self::new(self.id, token_ids, data, self.dim)?;
        out.summary = self.summary.clone();
        Ok(out)
    }
}

impl AsTokenMatrix for TokenEmbeddings {
    fn as_matrix(&self) -> TokenMatrix<'_> {
        TokenMatrix {
            token_ids: &self.token_ids,
            data: &self.data,
            dim: self.dim,
            summary: self.summary.as_deref(),
        }
    }
}

/// On-disk scalar type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F16,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F16 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F16),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }
}

/// An ordered collection of embedding records sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dim: usize,
    /// Summary vector dimension; 0 when records carry none.
    pub summary_dim: usize,
    pub dtype: Dtype,
    pub records: Vec<TokenEmbeddings>,
}

impl Corpus {
    /// Builds a corpus, checking that every record has dimension `dim` and that
    /// summary vectors are either present on every record or on none.
    pub fn new(dim: usize, dtype: Dtype, records: Vec<TokenEmbeddings>) -> Result<Self> {
        let summary_dim = records
            .first()
            .and_then(|r| r.summary().map(<[f32]>::len))
            .unwrap_or(0);
        for r in &records {
            if r.dim() != dim {
                return Err(Error::Shape(format!(
                    "record {} has dimension {}, corpus dimension is {dim}",
                    r.id,
                    r.dim()
                )));
            }
            let sd = r.summary().map_or(0, <[f32]>::len);
            if sd != summary_dim {
                return Err(Error::Shape(format!(
                    "record {} summary dimension {sd} differs from {summary_dim}",
                    r.id
                )));
            }
        }
        Ok(Self {
            dim,
            summary_dim,
            dtype,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.records.iter().map(TokenEmbeddings::len).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        io_util::put_u32(&mut out, FORMAT_VERSION);
        io_util::put_u32(&mut out, to_u32(self.dim, "dimension")?);
        io_util::put_u32(&mut out, to_u32(self.summary_dim, "summary dimension")?);
        out.push(self.dtype.code());
        io_util::put_u64(&mut out, self.records.len() as u64);
        let put = |out: &mut Vec<u8>, vals: &[f32]| match self.dtype {
            Dtype::F32 => io_util::put_f32s(out, vals),
            Dtype::F16 => io_util::put_f16s(out, vals),
        };
        for r in &self.records {
            io_util::put_u64(&mut out, r.id);
            io_util::put_u32(&mut out, to_u32(r.len(), "token count")?);
            for t in r.token_ids() {
                io_util::put_u32(&mut out, t.0);
            }
            put(&mut out, r.data());
            if self.summary_dim > 0 {
                let s = r.summary().ok_or_else(|| {
                    Error::Shape(format!("record {} lacks a summary vector", r.id))
                })?;
                put(&mut out, s);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        let magic = rd.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected \"LTIE\""
            )));
        }
        let version = rd.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let dim = rd.u32("dimension")? as usize;
        let summary_dim = rd.u32("summary dimension")? as usize;
        let dtype = Dtype::from_code(rd.u8("dtype")?)?;
        let count = rd.u64("record count")?;
        if dim == 0 && count > 0 {
            return Err(Error::Format("zero embedding dimension".into()));
        }
        let read = |rd: &mut ByteReader<'_>, n: usize, what: &str| match dtype {
            Dtype::F32 => rd.f32_vec(n, what),
            Dtype::F16 => rd.f16_vec(n, what),
        };
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let start = rd.offset();
            let id = rd.u64("record id")?;
            let n = rd.u32("token count")? as usize;
            let token_ids = rd
                .u32_vec(n, "token ids")?
                .into_iter()
                .map(TokenId)
                .collect();
            let data = read(&mut rd, n * dim, "embeddings")?;
            let rec =
                TokenEmbeddings::new(id, token_ids, data, dim).map_err(|e| Error::Corrupt {
                    offset: start,
                    message: e.to_string(),
                })?;
            let rec = if summary_dim > 0 {
                let s = read(&mut rd, summary_dim, "summary vector")?;
                rec.with_summary(s).map_err(|e| Error::Corrupt {
                    offset: start,
                    message: e.to_string(),
                })?
            } else {
                rec
            };
            records.push(rec);
        }
        if !rd.is_empty() {
            return Err(Error::Corrupt {
                offset: rd.offset(),
                message: "trailing bytes after last record".into(),
            });
        }
        Ok(Self {
            dim,
            summary_dim,
            dtype,
            records,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_file(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io_util::read_file(path.as_ref())?)
    }
}

/// Reads an embedding file. Record order is preserved.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::load(path)
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    corpus.save(path)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Shape(format!("{what} {v} does not fit in u32")))
}

/// Token id to IDF weight, `ln((N + 1) / (df + 1)) + 1`.
///
/// Tokens outside the table (and tokens that never occur) get the maximum
/// weight `ln(N + 1) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    weights: Vec<f64>,
    doc_freq: Vec<u64>,
    corpus_size: u64,
}

impl IdfTable {
    /// Builds a table from per-token document frequencies over `corpus_size` documents.
    pub fn from_doc_freq(doc_freq: Vec<u64>, corpus_size: u64) -> Result<Self> {
        if corpus_size == 0 {
            return Err(Error::Precondition(
                "IDF table needs a non-empty corpus".into(),
            ));
        }
        if let Some(df) = doc_freq.iter().find(|&&df| df > corpus_size) {
            return Err(Error::Precondition(format!(
                "document frequency {df} exceeds corpus size {corpus_size}"
            )));
        }
        let weights = doc_freq
            .iter()
            .map(|&df| idf_weight(df, corpus_size))
            .collect();
        Ok(Self {
            weights,
            doc_freq,
            corpus_size,
        })
    }

    pub fn corpus_size(&self) -> u64 {
        self.corpus_size
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        idf_weight(0, self.corpus_size)
    }

    pub fn weight(&self, t: TokenId) -> f64 {
        self.weights
            .get(t.index())
            .copied()
            .unwrap_or_else(|| self.max_weight())
    }

    pub fn doc_freq(&self, t: TokenId) -> u64 {
        self.doc_freq.get(t.index()).copied().unwrap_or(0)
    }

    /// TSV: a `#corpus_size<TAB>N` header, then `id<TAB>df<TAB>weight` per token.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#corpus_size\t{}\n", self.corpus_size);
        for (i, (df, w)) in self.doc_freq.iter().zip(&self.weights).enumerate() {
            out.push_str(&format!("{i}\t{df}\t{w}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let corpus_size = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#corpus_size\t")
                .and_then(|n| n.trim().parse::<u64>().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: "expected #corpus_size<TAB>N header".into(),
                })?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty IDF file".into(),
                })
            }
        };
        let mut doc_freq = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let mut cols = line.split('\t');
            let id: usize = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| err("bad token id".into()))?;
            let df: u64 = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| err("bad document frequency".into()))?;
            if id != doc_freq.len() {
                return Err(err(format!(
                    "expected token id {}, found {id}",
                    doc_freq.len()
                )));
            }
            doc_freq.push(df);
        }
        Self::from_doc_freq(doc_freq, corpus_size)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_file(path.as_ref(), self.to_tsv().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&io_util::read_to_string(path.as_ref())?)
    }
}

fn idf_weight(df: u64, n: u64) -> f64 {
    ((n as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

/// Counts, for every vocabulary token, the documents containing it at least once.
pub fn build_idf_table(docs: &[TokenEmbeddings], vocab: &Vocabulary) -> Result<IdfTable> {
    if docs.is_empty() {
        return Err(Error::Precondition(
            "IDF table needs a non-empty corpus".into(),
        ));
    }
    let mut doc_freq = vec![0u64; vocab.len()];
    let mut seen = vec![u64::MAX; vocab.len()];
    for (d, doc) in docs.iter().enumerate() {
        for &t in doc.token_ids() {
            vocab.check(t).map_err(|e| match e {
                Error::Vocabulary(m) => Error::Vocabulary(format!("document {}: {m}", doc.id)),
                other => other,
            })?;
            let i = t.index();
            if seen[i] != d as u64 {
                seen[i] = d as u64;
                doc_freq[i] += 1;
            }
        }
    }
    IdfTable::from_doc_freq(doc_freq, docs.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, ids: &[u32], data: &[f32], dim: usize) -> TokenEmbeddings {
        TokenEmbeddings::new(
            id,
            ids.iter().map(|&t| TokenId(t)).collect(),
            data.to_vec(),
            dim,
        )
        .unwrap()
    }

    #[test]
    fn empty_corpus_round_trips() {
        let c = Corpus::new(4, Dtype::F32, vec![]).unwrap();
        let back = Corpus::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim, 4);
    }

    #[test]
    fn single_doc_round_trips() {
        let d = rec(42, &[3, 9], &[0.1, 0.2, 0.3, 0.4, -1.0, 2.0, 0.5, 0.25], 4);
        let c = Corpus::new(4, Dtype::F32, vec![d.clone()]).unwrap();
        let back = Corpus::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.records[0], d);
    }

    #[test]
    fn f16_payload_is_stable_after_first_quantization() {
        let d = rec(1, &[1, 2], &[0.1, 0.7, -0.33, 1e-3], 2)
            .with_summary(vec![0.123, 0.456, 0.789])
            .unwrap();
        let c = Corpus::new(2, Dtype::F16, vec![d]).unwrap();
        let bytes = c.to_bytes().unwrap();
        let back = Corpus::from_bytes(&bytes).unwrap();
        assert_eq!(back.summary_dim, 3);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!((back.records[0].row(0)[1] - 0.7).abs() < 1e-3);
    }

    #[test]
    fn bad_version_is_a_format_error() {
        let c = Corpus::new(2, Dtype::F32, vec![]).unwrap();
        let mut bytes = c.to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(Corpus::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        assert!(matches!(
            Corpus::from_bytes(b"NOPE\x01\0\0\0"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let d = rec(1, &[1, 2], &[0.1, 0.7, -0.33, 1e-3], 2);
        let c = Corpus::new(2, Dtype::F32, vec![d]).unwrap();
        let bytes = c.to_bytes().unwrap();
        let cut = bytes.len() - 3;
        match Corpus::from_bytes(&bytes[..cut]) {
            Err(Error::Corrupt { offset, .. }) => {
                // header (25) + id (8) + n (4) + ids (8) = 45: start of the embedding payload
                assert_eq!(offset, 45);
            }
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_summary_presence_is_rejected() {
        let a = rec(1, &[1], &[1.0, 0.0], 2)
            .with_summary(vec![1.0])
            .unwrap();
        let b = rec(2, &[1], &[1.0, 0.0], 2);
        assert!(Corpus::new(2, Dtype::F32, vec![a, b]).is_err());
    }

    #[test]
    fn record_shape_checks() {
        assert!(TokenEmbeddings::new(1, vec![], vec![], 2).is_err());
        assert!(TokenEmbeddings::new(1, vec![TokenId(0)], vec![1.0], 2).is_err());
        assert!(matches!(
            TokenEmbeddings::new(1, vec![TokenId(0)], vec![1.0, f32::NAN], 2),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn vocabulary_sidecar_round_trip() {
        let text = "0\t[CLS]\tS\n1\tthe\tW\n2\tcat\t-\n3\t[MASK]\tSW\n";
        let v = Vocabulary::parse(text).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.is_special(TokenId(0)));
        assert!(v.is_stopword(TokenId(1)));
        assert!(!v.is_special(TokenId(2)) && !v.is_stopword(TokenId(2)));
        assert!(v.is_special(TokenId(3)) && v.is_stopword(TokenId(3)));
        assert_eq!(v.to_sidecar().unwrap(), text);
        assert!(Vocabulary::parse("0\tx\tQ\n").is_err());
    }

    fn docs_with(tokens: &[&[u32]]) -> Vec<TokenEmbeddings> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, ids)| rec(i as u64, ids, &vec![1.0; ids.len()], 1))
            .collect()
    }

    #[test]
    fn idf_formula_values() {
        let docs = docs_with(&[&[0, 1, 1], &[0, 2]]);
        let idf = build_idf_table(&docs, &Vocabulary::new(4)).unwrap();
        assert!((idf.weight(TokenId(0)) - 1.0).abs() < 1e-12);
        assert!((idf.weight(TokenId(1)) - 1.405_465_108_108_164_4).abs() < 1e-12);
        assert!((idf.weight(TokenId(3)) - 2.098_612_288_668_11).abs() < 1e-12);
        assert_eq!(idf.doc_freq(TokenId(1)), 1);
        assert_eq!(idf.weight(TokenId(99)), idf.max_weight());
    }

    #[test]
    fn idf_requires_documents_and_known_tokens() {
        assert!(matches!(
            build_idf_table(&[], &Vocabulary::new(3)),
            Err(Error::Precondition(_))
        ));
        let docs = docs_with(&[&[7]]);
        assert!(matches!(
            build_idf_table(&docs, &Vocabulary::new(3)),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn idf_tsv_round_trip() {
        let docs = docs_with(&[&[0, 1], &[0], &[2, 2]]);
        let idf = build_idf_table(&docs, &Vocabulary::new(5)).unwrap();
        assert_eq!(IdfTable::parse(&idf.to_tsv()).unwrap(), idf);
    }
}
