//! Relying-party scores: per-document confidence from the signature chain and
//! cross-document correlation of shared fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::MachineReadableDocument;
use crate::pki::TrustAnchors;
use crate::validation::{EndorsementKind, VerificationReport};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("verification report does not correspond to the document")]
    MismatchedReport,
    #[error("correlation needs at least two documents, got {0}")]
    TooFewDocuments(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Policy knobs for the confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScoreWeights {
    pub extractor_weight: f64,
    pub content_weight: f64,
    pub signature_weight: f64,
    pub untrusted_factor: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            extractor_weight: 0.5,
            content_weight: 0.3,
            signature_weight: 0.2,
            untrusted_factor: 0.25,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let unit = |name: &str, v: f64, open_low: bool| {
            let ok = if open_low {
                v > 0.0 && v <= 1.0
            } else {
                (0.0..=1.0).contains(&v)
            };
            if ok {
                Ok(())
            } else {
                Err(ScoringError::InvalidWeights(format!("{name} = {v} out of range")))
            }
        };
        unit("extractorWeight", self.extractor_weight, true)?;
        unit("contentWeight", self.content_weight, true)?;
        unit("signatureWeight", self.signature_weight, true)?;
        unit("untrustedFactor", self.untrusted_factor, false)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ScoringError> {
        let weights: ScoreWeights =
            serde_json::from_slice(bytes).map_err(|e| ScoringError::InvalidWeights(e.to_string()))?;
        weights.validate()?;
        Ok(weights)
    }

    /// Reads a weights file; a missing file yields the defaults.
    pub fn load_or_default(path: &Path) -> Result<Self, ScoringError> {
        match fs::read(path) {
            Ok(bytes) => ScoreWeights::from_json(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ScoreWeights::default()),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Contribution {
    pub sig_id: String,
    /// Weight before trust damping; 0 for excluded records.
    pub base_weight: f64,
    pub effective_weight: f64,
    pub included: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfidenceScore {
    pub value: f64,
    pub contributions: Vec<Contribution>,
}

/// Noisy-OR combination of independent corroborations: `1 − ∏(1 − w)`.
pub fn noisy_or<I: IntoIterator<Item = f64>>(weights: I) -> f64 {
    1.0 - weights.into_iter().map(|w| 1.0 - w).product::<f64>()
}

impl ConfidenceScore {
    pub fn recompute(&self) -> f64 {
        noisy_or(
            self.contributions
                .iter()
                .filter(|c| c.included)
                .map(|c| c.effective_weight),
        )
    }
}

/// Scores `doc` from its verification report.
///
/// Each effectively valid record contributes: the extractor weight; the
/// content weight scaled by the endorsed share of leaves (CONTENT and BOTH);
/// or the signature weight (SIGNATURE). Untrusted signers are damped by
/// `untrusted_factor`.
pub fn confidence(
    doc: &MachineReadableDocument,
    report: &VerificationReport,
    trust: &TrustAnchors,
    weights: &ScoreWeights,
) -> Result<ConfidenceScore, ScoringError> {
    if report.per_signature.len() != doc.signature_count()
        || doc
            .records()
            .zip(&report.per_signature)
            .any(|(r, s)| r.sig_id != s.sig_id)
    {
        return Err(ScoringError::MismatchedReport);
    }
    let total_leaves = doc.content.leaf_count();
    let contributions = doc
        .records()
        .zip(&report.per_signature)
        .enumerate()
        .map(|(ordinal, (record, status))| {
            if !status.effectively_valid {
                return Contribution {
                    sig_id: record.sig_id.clone(),
                    base_weight: 0.0,
                    effective_weight: 0.0,
                    included: false,
                    reason: status.reason.clone(),
                };
            }
            let base = if ordinal == 0 {
                weights.extractor_weight
            } else {
                match record.endorsement.kind {
                    EndorsementKind::Content | EndorsementKind::Both => {
                        let endorsed = doc.endorsed_leaves(record).map_or(0, |s| s.len());
                        weights.content_weight * endorsed as f64 / total_leaves as f64
                    }
                    EndorsementKind::Signature => weights.signature_weight,
                }
            };
            let trusted = trust.contains(&record.signer_fingerprint());
            Contribution {
                sig_id: record.sig_id.clone(),
                base_weight: base,
                effective_weight: if trusted { base } else { base * weights.untrusted_factor },
                included: true,
                reason: if trusted { "trusted" } else { "untrusted signer" }.to_owned(),
            }
        })
        .collect::<Vec<_>>();
    let mut score = ConfidenceScore {
        value: 0.0,
        contributions,
    };
    score.value = score.recompute();
    Ok(score)
}

/// Case-folds and collapses whitespace so equal field values compare equal.
pub fn normalize_value(value: &str) -> String {
    value
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorrelationFlag {
    None,
    NoOverlap,
}

/// Agreement between two documents, identified by input position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairScore {
    pub left: usize,
    pub right: usize,
    pub matches: u64,
    pub comparisons: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorrelationScore {
    pub value: f64,
    pub comparisons: u64,
    pub matches: u64,
    /// One entry per unordered pair `left < right`.
    pub pairwise: Vec<PairScore>,
    pub flag: CorrelationFlag,
}

/// Fraction of shared dotted paths, over all document pairs, whose
/// normalized values agree.
pub fn correlate(docs: &[MachineReadableDocument]) -> Result<CorrelationScore, ScoringError> {
    if docs.len() < 2 {
        return Err(ScoringError::TooFewDocuments(docs.len()));
    }
    let flattened: Vec<BTreeMap<String, String>> = docs
        .iter()
        .map(|d| {
            d.content
                .leaves()
                .into_iter()
                .map(|(path, value)| (path, normalize_value(value)))
                .collect()
        })
        .collect();

    let mut pairwise = Vec::with_capacity(docs.len() * (docs.len() - 1) / 2);
    for (i, left) in flattened.iter().enumerate() {
        for (j, right) in flattened.iter().enumerate().skip(i + 1) {
            let (mut matches, mut comparisons) = (0, 0);
            for (path, value) in left {
                if let Some(other) = right.get(path) {
                    comparisons += 1;
                    if other == value {
                        matches += 1;
                    }
                }
            }
            pairwise.push(PairScore {
                left: i,
                right: j,
                matches,
                comparisons,
            });
        }
    }
    let matches: u64 = pairwise.iter().map(|p| p.matches).sum();
    let comparisons: u64 = pairwise.iter().map(|p| p.comparisons).sum();
    let (value, flag) = if comparisons == 0 {
        (0.0, CorrelationFlag::NoOverlap)
    } else {
        (matches as f64 / comparisons as f64, CorrelationFlag::None)
    };
    Ok(CorrelationScore {
        value,
        comparisons,
        matches,
        pairwise,
        flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::Timestamp;
    use crate::document::{ContentMap, ContentValue, Metadata};
    use crate::extraction::sign_content;
    use crate::pki::{fingerprint, issue_certificate, Certificate, KeyPair};
    use crate::validation::{add_signature, verify_chain, Endorsement};
    use proptest::prelude::*;

    fn t0() -> Timestamp {
        Timestamp::parse("2026-01-01T00:00:00Z").unwrap()
    }

    fn identity(seed: u8) -> (KeyPair, Certificate) {
        let key = KeyPair::from_seed([seed; 32]);
        let cert = issue_certificate(&key, &format!("id{seed}"), "x@example.org", 365, t0()).unwrap();
        (key, cert)
    }

    fn doc_with(content: ContentMap) -> MachineReadableDocument {
        let (key, cert) = identity(1);
        sign_content(Metadata::new("id", "t", t0()), content, &key, &cert, t0()).unwrap()
    }

    fn four_leaves() -> ContentMap {
        ContentMap::new()
            .with("a", "1")
            .with("b", "2")
            .with("c", "3")
            .with("d", "4")
    }

    fn everyone() -> TrustAnchors {
        TrustAnchors::from_fingerprints((1..=5).map(|s| fingerprint(&identity(s).1)))
    }

    fn score(doc: &MachineReadableDocument, trust: &TrustAnchors) -> ConfidenceScore {
        let report = verify_chain(doc, trust, t0()).unwrap();
        confidence(doc, &report, trust, &ScoreWeights::default()).unwrap()
    }

    fn scenario(content_endorsement: Endorsement) -> MachineReadableDocument {
        let doc = doc_with(four_leaves());
        let (ka, ca) = identity(2);
        let (kb, cb) = identity(3);
        let doc = add_signature(&doc, &ka, &ca, content_endorsement, t0()).unwrap();
        let target = doc.extractor_signature.sig_id.clone();
        add_signature(&doc, &kb, &cb, Endorsement::signature([target]), t0()).unwrap()
    }

    #[test]
    fn nothing_valid_scores_zero() {
        let mut doc = doc_with(four_leaves());
        *doc.content.get_path_mut("a").unwrap() = ContentValue::Text("x".into());
        let s = score(&doc, &everyone());
        assert_eq!(s.value, 0.0);
        assert!(!s.contributions[0].included);
    }

    #[test]
    fn extractor_only() {
        assert_eq!(score(&doc_with(four_leaves()), &everyone()).value, 0.5);
    }

    #[test]
    fn extractor_content_signature() {
        let s = score(&scenario(Endorsement::content_all()), &everyone());
        // 1 - 0.5 * 0.7 * 0.8
        assert!((s.value - 0.72).abs() < 1e-12);
    }

    #[test]
    fn partial_content_endorsement() {
        let s = score(&scenario(Endorsement::content_paths(["a", "b"])), &everyone());
        assert!((s.contributions[1].effective_weight - 0.15).abs() < 1e-12);
        // 1 - 0.5 * 0.85 * 0.8
        assert!((s.value - 0.66).abs() < 1e-12);
    }

    #[test]
    fn untrusted_signers_are_damped() {
        let only_extractor = TrustAnchors::from_fingerprints([fingerprint(&identity(1).1)]);
        let s = score(&scenario(Endorsement::content_all()), &only_extractor);
        // 1 - 0.5 * (1 - 0.3*0.25) * (1 - 0.2*0.25)
        assert!((s.value - (1.0 - 0.5 * 0.925 * 0.95)).abs() < 1e-12);
        assert_eq!(s.contributions[1].reason, "untrusted signer");
    }

    #[test]
    fn mismatched_report() {
        let doc = scenario(Endorsement::content_all());
        let other = doc_with(four_leaves());
        let report = verify_chain(&other, &everyone(), t0()).unwrap();
        assert!(matches!(
            confidence(&doc, &report, &everyone(), &ScoreWeights::default()),
            Err(ScoringError::MismatchedReport)
        ));
    }

    #[test]
    fn weights_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        assert_eq!(ScoreWeights::load_or_default(&path).unwrap(), ScoreWeights::default());
        std::fs::write(
            &path,
            r#"{"extractorWeight":0.9,"contentWeight":0.1,"signatureWeight":0.1,"untrustedFactor":0}"#,
        )
        .unwrap();
        assert_eq!(ScoreWeights::load_or_default(&path).unwrap().extractor_weight, 0.9);
        std::fs::write(
            &path,
            r#"{"extractorWeight":0,"contentWeight":0.1,"signatureWeight":0.1,"untrustedFactor":0}"#,
        )
        .unwrap();
        assert!(ScoreWeights::load_or_default(&path).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_value("  John   SILVA "), "john silva");
        assert_eq!(normalize_value("1990-01-01"), "1990-01-01");
        assert_eq!(normalize_value("a\t\nb"), "a b");
    }

    fn person(name: &str, dob: &str) -> MachineReadableDocument {
        doc_with(ContentMap::new().with("name", name).with("dob", dob))
    }

    #[test]
    fn identical_documents_correlate_fully() {
        let s = correlate(&[person("A", "1"), person("A", "1")]).unwrap();
        assert_eq!((s.value, s.matches, s.comparisons), (1.0, 2, 2));
        assert_eq!(s.flag, CorrelationFlag::None);
    }

    #[test]
    fn disjoint_documents() {
        let s = correlate(&[
            doc_with(ContentMap::new().with("x", "1")),
            doc_with(ContentMap::new().with("y", "1")),
        ])
        .unwrap();
        assert_eq!((s.value, s.comparisons), (0.0, 0));
        assert_eq!(s.flag, CorrelationFlag::NoOverlap);
    }

    #[test]
    fn three_document_example() {
        let docs = [
            person("John Silva", "1990-01-01"),
            person("john  silva", "1990-01-01"),
            person("JOHN SILVA", "1991-05-05"),
        ];
        let s = correlate(&docs).unwrap();
        assert_eq!((s.matches, s.comparisons), (4, 6));
        assert!((s.value - 0.6667).abs() < 1e-4);
        assert_eq!(s.pairwise.len(), 3);
        assert_eq!(s.pairwise.iter().map(|p| p.matches).sum::<u64>(), s.matches);
    }

    #[test]
    fn too_few_documents() {
        assert!(matches!(
            correlate(&[person("A", "1")]),
            Err(ScoringError::TooFewDocuments(1))
        ));
        assert!(matches!(correlate(&[]), Err(ScoringError::TooFewDocuments(0))));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in "\\PC{0,20}") {
            let once = normalize_value(&v);
            prop_assert_eq!(normalize_value(&once), once);
        }

        #[test]
        fn correlation_is_order_independent(
            values in prop::collection::vec(prop::collection::btree_map("[a-c]", "[xy]", 1..4), 2..5),
            rotate in 0usize..5,
        ) {
            let mut docs: Vec<MachineReadableDocument> = values
                .iter()
                .map(|m| {
                    let mut c = ContentMap::new();
                    for (k, v) in m { c.insert(k.clone(), v.as_str()).unwrap(); }
                    doc_with(c)
                })
                .collect();
            let a = correlate(&docs).unwrap();
            let n = docs.len();
            docs.rotate_left(rotate % n);
            docs.swap(0, n - 1);
            let b = correlate(&docs).unwrap();
            prop_assert_eq!((a.value, a.matches, a.comparisons), (b.value, b.matches, b.comparisons));
            prop_assert!((0.0..=1.0).contains(&a.value));
        }
    }
}
