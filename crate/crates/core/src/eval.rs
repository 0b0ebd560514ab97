//! Identification-mode evaluation: CMC curves, rank-k tables and the twin
//! one-one decision. Ties always count against the true identity.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::fusion::{FusionError, Polarity, ScoreMatrix};

/// `rates[k - 1]` = fraction of probes whose true identity ranks within the top `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    /// Rate at rank `k` (1-based); ranks past the gallery size are 1.
    pub fn at(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks are 1-based");
        self.rates.get(k - 1).copied().unwrap_or(1.0)
    }

    pub fn to_csv(&self, system: &str) -> String {
        let mut out = String::from("system");
        for k in 1..=self.rates.len() {
            let _ = write!(out, ",rank_{k}");
        }
        out.push('\n');
        out.push_str(system);
        for r in &self.rates {
            let _ = write!(out, ",{:.4}", 100.0 * r);
        }
        out.push('\n');
        out
    }
}

/// Probe id maps to itself when probes and gallery share subject ids.
pub fn identity_truth(ids: &[String]) -> HashMap<String, String> {
    ids.iter().map(|id| (id.clone(), id.clone())).collect()
}

fn similarity_of(m: &ScoreMatrix, p: usize, g: usize) -> f64 {
    let s = m.row(p)[g];
    match m.polarity() {
        Polarity::Similarity => s,
        Polarity::Distance => -s,
    }
}

fn true_index(
    m: &ScoreMatrix,
    p: usize,
    truth: &HashMap<String, String>,
) -> Result<usize, FusionError> {
    let probe = &m.probe_ids()[p];
    let want = truth.get(probe).cloned().unwrap_or_else(|| probe.clone());
    m.gallery_index(&want)
        .ok_or_else(|| FusionError::UnknownIdentity(probe.clone(), want))
}

/// 1 + the number of other identities scoring at least as well as the truth.
pub fn ranks(m: &ScoreMatrix, truth: &HashMap<String, String>) -> Result<Vec<usize>, FusionError> {
    (0..m.n_probes())
        .map(|p| {
            let t = true_index(m, p, truth)?;
            let s_true = similarity_of(m, p, t);
            Ok(1 + (0..m.n_gallery())
                .filter(|&g| g != t && similarity_of(m, p, g) >= s_true)
                .count())
        })
        .collect()
}

pub fn cmc(m: &ScoreMatrix, truth: &HashMap<String, String>) -> Result<CmcCurve, FusionError> {
    let ranks = ranks(m, truth)?;
    let n = ranks.len() as f64;
    let mut counts = vec![0usize; m.n_gallery()];
    for r in ranks {
        counts[r - 1] += 1;
    }
    let mut acc = 0;
    let rates = counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve { rates })
}

/// Fraction of probes whose true identity beats their co-twin outright.
pub fn twin_one_one(
    m: &ScoreMatrix,
    truth: &HashMap<String, String>,
    twins: &HashMap<String, String>,
) -> Result<f64, FusionError> {
    let mut correct = 0;
    for p in 0..m.n_probes() {
        let t = true_index(m, p, truth)?;
        let true_id = &m.gallery_ids()[t];
        let probe = &m.probe_ids()[p];
        let twin = twins.get(true_id).ok_or_else(|| {
            FusionError::MissingTwin(probe.clone(), format!("(none for {true_id})"))
        })?;
        let w = m
            .gallery_index(twin)
            .ok_or_else(|| FusionError::MissingTwin(probe.clone(), twin.clone()))?;
        if similarity_of(m, p, t) > similarity_of(m, p, w) {
            correct += 1;
        }
    }
    Ok(correct as f64 / m.n_probes() as f64)
}

pub const TABLE_RANKS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub system: String,
    /// Percentages at ranks 1..=5, or a single rank-1 value for one-one rows.
    pub percent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
}

pub fn rank_table(curves: &[(&str, &CmcCurve)]) -> RankTable {
    RankTable {
        rows: curves
            .iter()
            .map(|(system, curve)| RankRow {
                system: system.to_string(),
                percent: (1..=TABLE_RANKS).map(|k| 100.0 * curve.at(k)).collect(),
            })
            .collect(),
    }
}

impl RankTable {
    pub fn push_one_one(&mut self, system: &str, accuracy: f64) {
        self.rows.push(RankRow {
            system: system.to_string(),
            percent: vec![100.0 * accuracy],
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("system");
        for k in 1..=TABLE_RANKS {
            let _ = write!(out, ",rank_{k}");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.system);
            for k in 0..TABLE_RANKS {
                match row.percent.get(k) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.1}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text layout with a header row of ranks.
    pub fn to_text(&self) -> String {
        let label_w = self
            .rows
            .iter()
            .map(|r| r.system.len())
            .chain(["BIOMETRIC SYSTEM".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<label_w$}  Identification Rate %", "");
        let _ = write!(out, "{:<label_w$}", "BIOMETRIC SYSTEM");
        for k in 1..=TABLE_RANKS {
            let _ = write!(out, "  {:>6}", format!("RANK-{k}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<label_w$}", row.system);
            for v in &row.percent {
                let _ = write!(out, "  {v:>6.1}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn sim(rows: &[Vec<f64>]) -> ScoreMatrix {
        ScoreMatrix::from_rows(
            ids(rows.len()),
            ids(rows[0].len()),
            rows,
            Polarity::Similarity,
        )
        .unwrap()
    }

    #[test]
    fn perfect_scores() {
        let m = sim(&[
            vec![0.9, 0.1, 0.2],
            vec![0.0, 0.5, 0.4],
            vec![0.3, 0.3, 0.6],
        ]);
        let c = cmc(&m, &identity_truth(&ids(3))).unwrap();
        assert_eq!(c.rates, vec![1.0; 3]);
    }

    #[test]
    fn hand_built_ranks_one_and_three() {
        // probe s0 scores its own identity highest; probe s1 is beaten by s0 and s2
        let rows = vec![vec![0.9, 0.2, 0.1], vec![0.7, 0.3, 0.5]];
        let m = ScoreMatrix::from_rows(ids(2), ids(3), &rows, Polarity::Similarity).unwrap();
        let truth = identity_truth(&ids(2));
        assert_eq!(ranks(&m, &truth).unwrap(), vec![1, 3]);
        assert_eq!(cmc(&m, &truth).unwrap().rates, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn ties_count_against_truth() {
        let m = sim(&[vec![0.5, 0.5], vec![0.1, 0.9]]);
        assert_eq!(ranks(&m, &identity_truth(&ids(2))).unwrap(), vec![2, 1]);
    }

    #[test]
    fn distance_polarity_ranks_low_first() {
        let m = ScoreMatrix::from_rows(ids(1), ids(3), &[vec![0.1, 5.0, 0.2]], Polarity::Distance)
            .unwrap();
        assert_eq!(ranks(&m, &identity_truth(&ids(1))).unwrap(), vec![1]);
    }

    #[test]
    fn unknown_identity() {
        let m = sim(&[vec![0.5, 0.5]]);
        let truth: HashMap<String, String> = [("s0".to_string(), "zz".to_string())].into();
        assert!(matches!(
            cmc(&m, &truth),
            Err(FusionError::UnknownIdentity(..))
        ));
    }

    fn pairs(n: usize) -> HashMap<String, String> {
        (0..n)
            .map(|i| (format!("s{i}"), format!("s{}", i ^ 1)))
            .collect()
    }

    #[test]
    fn one_one_counts() {
        // twins: s0<->s1, s2<->s3; probe s2 loses to its twin
        let m = sim(&[
            vec![0.9, 0.1, 0.0, 0.0],
            vec![0.2, 0.8, 0.0, 0.0],
            vec![0.0, 0.0, 0.3, 0.6],
            vec![0.0, 0.0, 0.1, 0.4],
        ]);
        let acc = twin_one_one(&m, &identity_truth(&ids(4)), &pairs(4)).unwrap();
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn one_one_extremes() {
        let tied = sim(&[vec![0.5, 0.5], vec![0.2, 0.2]]);
        assert_eq!(
            twin_one_one(&tied, &identity_truth(&ids(2)), &pairs(2)).unwrap(),
            0.0
        );
        // every error is to a stranger, never to the twin
        let m = sim(&[
            vec![0.5, 0.1, 0.9, 0.0],
            vec![0.0, 0.5, 0.1, 0.9],
            vec![0.9, 0.0, 0.5, 0.1],
            vec![0.1, 0.9, 0.0, 0.5],
        ]);
        let truth = identity_truth(&ids(4));
        assert_eq!(cmc(&m, &truth).unwrap().at(1), 0.0);
        assert_eq!(twin_one_one(&m, &truth, &pairs(4)).unwrap(), 1.0);
        let lonely: HashMap<String, String> =
            [("s0".into(), "s9".into()), ("s1".into(), "s0".into())].into();
        assert!(matches!(
            twin_one_one(&tied, &identity_truth(&ids(2)), &lonely),
            Err(FusionError::MissingTwin(..))
        ));
    }

    #[test]
    fn table_layout() {
        let perfect = CmcCurve {
            rates: vec![1.0; 3],
        };
        let half = CmcCurve {
            rates: vec![0.5, 0.75, 1.0],
        };
        let mut t = rank_table(&[("Speech", &perfect), ("Ear", &half)]);
        t.push_one_one("Speech (only twins one-one)", 0.895);
        assert_eq!(t.rows[0].percent, vec![100.0; 5]);
        assert_eq!(t.rows[1].percent, vec![50.0, 75.0, 100.0, 100.0, 100.0]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("BIOMETRIC SYSTEM"));
        assert!(lines[1].ends_with("RANK-5"));
        assert!(lines[4].trim_end().ends_with("89.5"));
        let csv = t.to_csv();
        assert_eq!(
            csv.lines().nth(3),
            Some("Speech (only twins one-one),89.5,,,,")
        );
    }

    proptest! {
        #[test]
        fn cmc_is_monotone_and_complete(
            (p, g, cells) in (1usize..6, 1usize..7).prop_flat_map(|(p, g)| {
                (Just(p), Just(g), prop::collection::vec(0u8..4, p * g))
            })
        ) {
            let rows: Vec<Vec<f64>> = cells.chunks(g).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
            let pids: Vec<String> = (0..p).map(|i| format!("s{}", i % g)).collect();
            prop_assume!(p <= g);
            let m = ScoreMatrix::from_rows(pids.clone(), ids(g), &rows, Polarity::Similarity).unwrap();
            let c = cmc(&m, &identity_truth(&pids)).unwrap();
            prop_assert!(c.rates.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*c.rates.last().unwrap(), 1.0);
            // rank-1 = strict argmax fraction
            let strict = rows.iter().enumerate().filter(|(i, r)| {
                r.iter().enumerate().all(|(j, &v)| j == *i || v < r[*i])
            }).count();
            prop_assert_eq!(c.at(1), strict as f64 / p as f64);
        }
    }
}
