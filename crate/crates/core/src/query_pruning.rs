//! Query-token selection for the candidate-generation stage.
//!
//! Only candidate generation sees the reduced token set; the final rerank
//! always scores with the full query, so a document found under both settings
//! gets the same final score.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::doc_pruning::{attention_importance, rank_desc};
use crate::error::{Error, Result};
use crate::store::{IdfTable, TokenEmbeddings, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QtpMethod {
    #[default]
    None,
    /// Keep the `idf_keep` highest-IDF tokens.
    IdfTop,
    /// Keep the `att_k_min` lowest- and `att_k_max` highest-importance tokens.
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QtpConfig {
    pub method: QtpMethod,
    pub idf_keep: usize,
    pub att_k_min: usize,
    pub att_k_max: usize,
}

impl QtpConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn idf(keep: usize) -> Self {
        Self {
            method: QtpMethod::IdfTop,
            idf_keep: keep,
            ..Self::default()
        }
    }

    pub fn attention(k_min: usize, k_max: usize) -> Self {
        Self {
            method: QtpMethod::Attention,
            att_k_min: k_min,
            att_k_max: k_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            QtpMethod::None => Ok(()),
            QtpMethod::IdfTop if self.idf_keep == 0 => Err(Error::Config(
                "IDF query pruning must keep at least one token".into(),
            )),
            QtpMethod::Attention if self.att_k_min + self.att_k_max == 0 => Err(Error::Config(
                "attention query pruning must keep at least one token".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Query positions chosen for candidate generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySelection {
    /// Ascending positions.
    pub positions: Vec<usize>,
    /// Set when every position was special and selection fell back to all of them.
    pub fell_back: bool,
}

/// Picks the query positions used for candidate generation.
///
/// Special and padding tokens (as flagged in `vocab`) are never eligible. If no
/// eligible token remains, all positions are used and a warning is logged.
pub fn select_query_tokens(
    q: &TokenEmbeddings,
    cfg: &QtpConfig,
    idf: Option<&IdfTable>,
    vocab: Option<&Vocabulary>,
) -> Result<QuerySelection> {
    cfg.validate()?;
    let all = || (0..q.len()).collect::<Vec<_>>();
    if cfg.method == QtpMethod::None {
        return Ok(QuerySelection {
            positions: all(),
            fell_back: false,
        });
    }
    let eligible: Vec<usize> = (0..q.len())
        .filter(|&i| vocab.is_none_or(|v| !v.is_special(q.token_ids()[i])))
        .collect();
    if eligible.is_empty() {
        log::warn!(
            "query {}: no eligible tokens after excluding special tokens; using all positions",
            q.id
        );
        return Ok(QuerySelection {
            positions: all(),
            fell_back: true,
        });
    }

    let chosen: BTreeSet<usize> = match cfg.method {
        QtpMethod::None => unreachable!(),
        QtpMethod::IdfTop => {
            let idf =
                idf.ok_or_else(|| Error::Config("IDF query pruning needs an IDF table".into()))?;
            let weights: Vec<f64> = eligible
                .iter()
                .map(|&i| idf.weight(q.token_ids()[i]))
                .collect();
            rank_desc(&weights)
                .into_iter()
                .take(cfg.idf_keep)
                .map(|r| eligible[r])
                .collect()
        }
        QtpMethod::Attention => {
            let importance = attention_importance(q)?;
            let pool: Vec<f32> = eligible.iter().map(|&i| importance[i]).collect();
            let desc = rank_desc(&pool);
            let neg: Vec<f32> = pool.iter().map(|v| -v).collect();
            let asc = rank_desc(&neg);
            desc.iter()
                .take(cfg.att_k_max)
                .chain(asc.iter().take(cfg.att_k_min))
                .map(|&r| eligible[r])
                .collect()
        }
    };
    Ok(QuerySelection {
        positions: chosen.into_iter().collect(),
        fell_back: false,
    })
}
