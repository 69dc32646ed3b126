//! Deterministic synthetic embeddings and collections.
//!
//! Every token id owns a seeded random unit vector; each occurrence is that
//! vector plus a small perturbation keyed on position and the preceding token,
//! then re-normalized. Repeated tokens therefore land close together
//! (cosine well above 0.9) while still differing by context.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use crate::error::{Error, Result};
use crate::store::{Corpus, Dtype, TokenEmbeddings, TokenId, Vocabulary};

/// Per-component noise scale, relative to a unit base vector.
const PERTURBATION: f32 = 0.15;

pub const CLS: TokenId = TokenId(0);
pub const SEP: TokenId = TokenId(1);
pub const DOC_MARKER: TokenId = TokenId(2);
pub const QUERY_MARKER: TokenId = TokenId(3);
pub const MASK: TokenId = TokenId(4);
const SPECIAL_SURFACES: [&str; 5] = ["[CLS]", "[SEP]", "[D]", "[Q]", "[MASK]"];
pub const NUM_SPECIAL: u32 = SPECIAL_SURFACES.len() as u32;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn gaussian_vec(seed: u64, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub(crate) fn normalize(v: &mut [f32]) {
    let norm = v
        .iter()
        .map(|x| (*x as f64) * (*x as f64))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

/// Unit base vector of a token under `seed`.
pub fn token_base_vector(token: TokenId, dim: usize, seed: u64) -> Vec<f32> {
    let mut v = gaussian_vec(mix(&[seed, 1, token.0 as u64]), dim);
    normalize(&mut v);
    v
}

/// Embeds a token sequence into an `n x h` row-major matrix of unit rows.
pub fn synthetic_embed(token_ids: &[TokenId], h: usize, seed: u64) -> Result<Vec<f32>> {
    if h < 2 {
        return Err(Error::Precondition(format!(
            "synthetic embedding dimension must be at least 2, got {h}"
        )));
    }
    let scale = PERTURBATION / (h as f32).sqrt();
    let mut out = Vec::with_capacity(token_ids.len() * h);
    let mut prev = u64::MAX;
    for (pos, &t) in token_ids.iter().enumerate() {
        let mut row = token_base_vector(t, h, seed);
        let noise = gaussian_vec(mix(&[seed, 2, t.0 as u64, pos as u64, prev]), h);
        for (r, n) in row.iter_mut().zip(noise) {
            *r += scale * n;
        }
        normalize(&mut row);
        out.extend_from_slice(&row);
        prev = t.0 as u64;
    }
    Ok(out)
}

/// Parameters for [`generate_collection`].
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_docs: usize,
    pub num_queries: usize,
    pub dim: usize,
    /// 0 disables summary vectors.
    pub summary_dim: usize,
    /// Total vocabulary size including the special markers and stop words.
    pub vocab_size: usize,
    pub num_stopwords: usize,
    /// Fraction of content positions filled with stop words.
    pub stopword_rate: f64,
    /// Inclusive range of content tokens per document (markers excluded).
    pub doc_len: (usize, usize),
    pub query_len: (usize, usize),
    /// Pad queries with `[MASK]` up to this total length.
    pub query_pad_to: Option<usize>,
    /// Probability that a query content token is copied from its target document.
    pub query_overlap: f64,
    pub dtype: Dtype,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_docs: 200,
            num_queries: 20,
            dim: 32,
            summary_dim: 0,
            vocab_size: 2000,
            num_stopwords: 40,
            stopword_rate: 0.25,
            doc_len: (5, 40),
            query_len: (3, 8),
            query_pad_to: None,
            query_overlap: 0.7,
            dtype: Dtype::F32,
            seed: 7,
        }
    }
}

/// Documents, queries, vocabulary and one relevant document per query.
#[derive(Debug, Clone)]
pub struct SyntheticCollection {
    pub vocab: Vocabulary,
    pub docs: Corpus,
    pub queries: Corpus,
    /// `(query id, doc id, grade)`.
    pub qrels: Vec<(u64, u64, u32)>,
}

/// Generates a seeded collection: Zipf-distributed content tokens, a stop-word
/// band, `[CLS] [D] ... [SEP]` documents and `[CLS] [Q] ...` queries built
/// largely from their target document's tokens.
pub fn generate_collection(cfg: &SyntheticConfig) -> Result<SyntheticCollection> {
    let content_start = NUM_SPECIAL as usize + cfg.num_stopwords;
    if cfg.vocab_size <= content_start {
        return Err(Error::Config(format!(
            "vocabulary of {} leaves no content tokens after {} specials and {} stop words",
            cfg.vocab_size, NUM_SPECIAL, cfg.num_stopwords
        )));
    }
    if cfg.doc_len.0 == 0 || cfg.doc_len.0 > cfg.doc_len.1 {
        return Err(Error::Config(format!(
            "bad document length range {:?}",
            cfg.doc_len
        )));
    }
    if cfg.query_len.0 == 0 || cfg.query_len.0 > cfg.query_len.1 {
        return Err(Error::Config(format!(
            "bad query length range {:?}",
            cfg.query_len
        )));
    }
    if cfg.num_queries > 0 && cfg.num_docs == 0 {
        return Err(Error::Config("queries need at least one document".into()));
    }

    let mut vocab = Vocabulary::new(cfg.vocab_size);
    for (i, s) in SPECIAL_SURFACES.iter().enumerate() {
        let t = TokenId(i as u32);
        vocab.set_surface(t, *s)?;
        vocab.set_special(t, true)?;
    }
    for i in NUM_SPECIAL as usize..content_start {
        let t = TokenId(i as u32);
        vocab.set_surface(t, format!("stop{}", i - NUM_SPECIAL as usize))?;
        vocab.set_stopword(t, true)?;
    }
    for i in content_start..cfg.vocab_size {
        vocab.set_surface(TokenId(i as u32), format!("w{}", i - content_start))?;
    }

    let n_content = cfg.vocab_size - content_start;
    let zipf = Zipf::new(n_content as f64, 1.0)
        .map_err(|e| Error::Config(format!("zipf distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, 3]));
    let draw_token = |rng: &mut ChaCha8Rng| -> TokenId {
        if cfg.num_stopwords > 0 && rng.random_bool(cfg.stopword_rate) {
            TokenId((NUM_SPECIAL as usize + rng.random_range(0..cfg.num_stopwords)) as u32)
        } else {
            let rank = zipf.sample(rng) as usize - 1;
            // scatter ranks so frequent tokens are not all adjacent ids
            let slot = (splitmix(rank as u64 ^ cfg.seed) % n_content as u64) as usize;
            TokenId((content_start + slot) as u32)
        }
    };

    let mut docs = Vec::with_capacity(cfg.num_docs);
    for d in 0..cfg.num_docs {
        let len = rng.random_range(cfg.doc_len.0..=cfg.doc_len.1);
        let mut ids = vec![CLS, DOC_MARKER];
        ids.extend((0..len).map(|_| draw_token(&mut rng)));
        ids.push(SEP);
        docs.push(make_record(d as u64, ids, cfg)?);
    }

    let mut queries = Vec::with_capacity(cfg.num_queries);
    let mut qrels = Vec::with_capacity(cfg.num_queries);
    for q in 0..cfg.num_queries {
        let target = rng.random_range(0..cfg.num_docs);
        let target_content: Vec<TokenId> = docs[target]
            .token_ids()
            .iter()
            .copied()
            .filter(|t| !vocab.is_special(*t))
            .collect();
        let len = rng.random_range(cfg.query_len.0..=cfg.query_len.1);
        let mut ids = vec![CLS, QUERY_MARKER];
        for _ in 0..len {
            let t = match target_content.choose(&mut rng) {
                Some(&t) if rng.random_bool(cfg.query_overlap) => t,
                _ => draw_token(&mut rng),
            };
            ids.push(t);
        }
        if let Some(pad) = cfg.query_pad_to {
            while ids.len() < pad {
                ids.push(MASK);
            }
        }
        queries.push(make_record(q as u64, ids, cfg)?);
        qrels.push((q as u64, target as u64, 1));
    }

    Ok(SyntheticCollection {
        vocab,
        docs: Corpus::new(cfg.dim, cfg.dtype, docs)?,
        queries: Corpus::new(cfg.dim, cfg.dtype, queries)?,
        qrels,
    })
}

fn make_record(id: u64, ids: Vec<TokenId>, cfg: &SyntheticConfig) -> Result<TokenEmbeddings> {
    let data = synthetic_embed(&ids, cfg.dim, cfg.seed)?;
    let summary = (cfg.summary_dim > 0).then(|| {
        let mut s = vec![0.0f32; cfg.summary_dim];
        for &t in ids.iter().filter(|t| t.0 >= NUM_SPECIAL) {
            for (a, b) in s
                .iter_mut()
                .zip(token_base_vector(t, cfg.summary_dim, cfg.seed ^ 0xC15))
            {
                *a += b;
            }
        }
        normalize(&mut s);
        s
    });
    let rec = TokenEmbeddings::new(id, ids, data, cfg.dim)?;
    match summary {
        Some(s) => rec.with_summary(s),
        None => Ok(rec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn deterministic() {
        let ids: Vec<TokenId> = [5, 9, 5, 11].map(TokenId).to_vec();
        assert_eq!(
            synthetic_embed(&ids, 16, 3).unwrap(),
            synthetic_embed(&ids, 16, 3).unwrap()
        );
        assert_ne!(
            synthetic_embed(&ids, 16, 3).unwrap(),
            synthetic_embed(&ids, 16, 4).unwrap()
        );
    }

    #[test]
    fn rows_are_unit_norm() {
        for h in [2, 3, 8, 128] {
            let m = synthetic_embed(&[TokenId(17)], h, 1).unwrap();
            let n: f64 = m.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "h={h} norm={n}");
        }
    }

    #[test]
    fn dimension_below_two_rejected() {
        assert!(matches!(
            synthetic_embed(&[TokenId(1)], 1, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn repeated_token_rows_are_close() {
        let ids = [TokenId(42), TokenId(7), TokenId(42)];
        let m = synthetic_embed(&ids, 32, 11).unwrap();
        let c = cosine(&m[0..32], &m[64..96]);
        // regression fixture computed from this generator
        assert!((c - 0.971_747).abs() < 1e-5, "cosine {c}");
        for seed in 0..50 {
            for h in [2, 4, 32] {
                let m = synthetic_embed(&ids, h, seed).unwrap();
                assert!(cosine(&m[0..h], &m[2 * h..3 * h]) > 0.9);
            }
        }
    }

    #[test]
    fn collection_shape() {
        let cfg = SyntheticConfig {
            num_docs: 30,
            num_queries: 5,
            summary_dim: 6,
            query_pad_to: Some(12),
            ..Default::default()
        };
        let c = generate_collection(&cfg).unwrap();
        assert_eq!(c.docs.len(), 30);
        assert_eq!(c.queries.len(), 5);
        assert_eq!(c.docs.summary_dim, 6);
        for q in &c.queries.records {
            assert!(q.len() >= 12);
            assert_eq!(q.token_ids()[0], CLS);
        }
        for d in &c.docs.records {
            assert_eq!(&d.token_ids()[..2], &[CLS, DOC_MARKER]);
            assert!(d.token_ids().iter().all(|t| c.vocab.contains(*t)));
        }
        let again = generate_collection(&cfg).unwrap();
        assert_eq!(again.docs, c.docs);
    }
}
