use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::{read_to_string, write_file};
use crate::scoring::ScoredDoc;

/// Graded relevance judgments, `qid<TAB>0<TAB>docid<TAB>grade` on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<u64, BTreeMap<u64, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: u64, doc_id: u64, grade: u32) {
        self.judgments.entry(qid).or_default().insert(doc_id, grade);
    }

    pub fn contains_query(&self, qid: u64) -> bool {
        self.judgments.contains_key(&qid)
    }

    pub fn grade(&self, qid: u64, doc_id: u64) -> u32 {
        self.judgments
            .get(&qid)
            .and_then(|m| m.get(&doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn judged(&self, qid: u64) -> Option<&BTreeMap<u64, u32>> {
        self.judgments.get(&qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = u64> + '_ {
        self.judgments.keys().copied()
    }

    /// Pairs with grade >= 1, in (qid, doc id) order.
    pub fn positive_pairs(&self) -> Vec<(u64, u64)> {
        self.judgments
            .iter()
            .flat_map(|(q, docs)| {
                docs.iter()
                    .filter(|(_, g)| **g >= 1)
                    .map(move |(d, _)| (*q, *d))
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut qrels = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            }
            let qid = cols[0]
                .parse()
                .map_err(|_| err(format!("bad query id {:?}", cols[0])))?;
            let doc = cols[2]
                .parse()
                .map_err(|_| err(format!("bad document id {:?}", cols[2])))?;
            let grade = cols[3]
                .parse()
                .map_err(|_| err(format!("grade must be an integer >= 0, got {:?}", cols[3])))?;
            qrels.insert(qid, doc, grade);
        }
        Ok(qrels)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                let _ = writeln!(out, "{q}\t0\t{d}\t{g}");
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_tsv().as_bytes())
    }
}

/// Ranked results per query, written as 6-column TREC lines
/// `qid Q0 docid rank score tag`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub tag: String,
    rankings: BTreeMap<u64, Vec<ScoredDoc>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    /// Stores a ranking; it must already be in rank order.
    pub fn insert(&mut self, qid: u64, ranking: Vec<ScoredDoc>) -> Result<()> {
        if ranking.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(Error::Precondition(format!(
                "ranking of query {qid} has increasing scores"
            )));
        }
        self.rankings.insert(qid, ranking);
        Ok(())
    }

    pub fn ranking(&self, qid: u64) -> Option<&[ScoredDoc]> {
        self.rankings.get(&qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = u64> + '_ {
        self.rankings.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn to_trec(&self) -> String {
        let tag = if self.tag.is_empty() {
            "latte"
        } else {
            &self.tag
        };
        let mut out = String::new();
        for (q, docs) in &self.rankings {
            for (r, d) in docs.iter().enumerate() {
                let _ = writeln!(out, "{q} Q0 {} {} {:.6} {tag}", d.doc_id, r + 1, d.score);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tag = String::new();
        let mut rows: BTreeMap<u64, Vec<(usize, usize, ScoredDoc)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(err(format!("expected 6 columns, found {}", cols.len())));
            }
            let qid = cols[0]
                .parse()
                .map_err(|_| err(format!("bad query id {:?}", cols[0])))?;
            let doc_id = cols[2]
                .parse()
                .map_err(|_| err(format!("bad document id {:?}", cols[2])))?;
            let rank: usize = cols[3]
                .parse()
                .map_err(|_| err(format!("bad rank {:?}", cols[3])))?;
            let score: f32 = cols[4]
                .parse()
                .map_err(|_| err(format!("bad score {:?}", cols[4])))?;
            if tag.is_empty() {
                tag = cols[5].to_string();
            }
            rows.entry(qid)
                .or_default()
                .push((rank, i + 1, ScoredDoc { doc_id, score }));
        }
        let mut run = Run::new(tag);
        for (qid, mut list) in rows {
            list.sort_by_key(|(rank, _, _)| *rank);
            for (expect, (rank, line, _)) in list.iter().enumerate() {
                if *rank != expect + 1 {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("query {qid}: ranks are not contiguous from 1"),
                    });
                }
            }
            let ranking = list.into_iter().map(|(_, _, d)| d).collect();
            run.insert(qid, ranking)?;
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_trec().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sd(doc_id: u64, score: f32) -> ScoredDoc {
        ScoredDoc { doc_id, score }
    }

    #[test]
    fn qrels_round_trip() {
        let text = "3\t0\t10\t1\n3\t0\t11\t0\n1\t0\t5\t2\n";
        let q = Qrels::parse(text).unwrap();
        assert_eq!(q.grade(1, 5), 2);
        assert_eq!(q.grade(1, 6), 0);
        assert_eq!(q.positive_pairs(), vec![(1, 5), (3, 10)]);
        assert_eq!(Qrels::parse(&q.to_tsv()).unwrap(), q);
    }

    #[test]
    fn qrels_rejects_negative_grade() {
        assert!(matches!(
            Qrels::parse("1\t0\t2\t-1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Qrels::parse("\n1 0 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn run_round_trip_is_stable() {
        let mut run = Run::new("t");
        run.insert(2, vec![sd(7, 1.234_567_8), sd(3, 0.5), sd(9, 0.5)])
            .unwrap();
        run.insert(1, vec![sd(1, -0.25)]).unwrap();
        let text = run.to_trec();
        assert!(text.starts_with("1 Q0 1 1 -0.250000 t\n2 Q0 7 1 1.234568 t\n"));
        let back = Run::parse(&text).unwrap();
        assert_eq!(back.to_trec(), text);
        let ids: Vec<u64> = back.ranking(2).unwrap().iter().map(|d| d.doc_id).collect();
        assert_eq!(ids, vec![7, 3, 9]);
    }

    #[test]
    fn run_rejects_gaps_and_increasing_scores() {
        assert!(Run::parse("1 Q0 4 1 0.5 x\n1 Q0 5 3 0.4 x\n").is_err());
        assert!(Run::parse("1 Q0 4 1 0.5 x\n1 Q0 5 2 0.6 x\n").is_err());
        assert!(Run::parse("1 Q0 4 1 0.5\n").is_err());
        let shuffled = Run::parse("1 Q0 5 2 0.4 x\n1 Q0 4 1 0.5 x\n").unwrap();
        assert_eq!(shuffled.ranking(1).unwrap()[0].doc_id, 4);
    }
}
