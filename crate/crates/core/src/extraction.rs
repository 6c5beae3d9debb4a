//! Template-driven extraction of key-value content from a document's text
//! layer, and the extractor's signature over the result.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::document::{check_key, digest, ContentMap, MachineReadableDocument, Metadata};
use crate::pki::{sign_bytes, Certificate, KeyPair};
use crate::validation::{extractor_payload, sig_id_for, Endorsement, SignatureRecord, ValidationError};

pub const TEMPLATE_EXTENSION: &str = ".template.json";

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("cannot parse template {path}: {message}")]
    TemplateParse { path: PathBuf, message: String },
    #[error("duplicate templateId `{0}`")]
    DuplicateTemplateId(String),
    #[error("required field `{0}` missing")]
    RequiredFieldMissing(String),
    #[error("no template rule matched the text")]
    EmptyResult,
    #[error(transparent)]
    Signing(#[from] ValidationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps a labelled line of the source text to one content key.
#[derive(Debug, Clone)]
pub struct FieldRule {
    pub key: String,
    pub anchor: String,
    pub pattern: Regex,
    pub required: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct FieldRuleWire {
    key: String,
    anchor: String,
    pattern: String,
    #[serde(default)]
    required: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TemplateWire {
    template_id: String,
    doc_type: String,
    rules: Vec<FieldRuleWire>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TemplateWire", into = "TemplateWire")]
pub struct Template {
    pub template_id: String,
    pub doc_type: String,
    pub rules: Vec<FieldRule>,
}

impl TryFrom<TemplateWire> for Template {
    type Error = ExtractionError;

    fn try_from(wire: TemplateWire) -> Result<Self, Self::Error> {
        let rules = wire
            .rules
            .into_iter()
            .map(|r| {
                let pattern = Regex::new(&r.pattern)
                    .map_err(|e| ExtractionError::InvalidTemplate(format!("rule `{}`: {e}", r.key)))?;
                Ok(FieldRule {
                    key: r.key,
                    anchor: r.anchor,
                    pattern,
                    required: r.required,
                })
            })
            .collect::<Result<Vec<_>, ExtractionError>>()?;
        Template::new(wire.template_id, wire.doc_type, rules)
    }
}

impl From<Template> for TemplateWire {
    fn from(t: Template) -> Self {
        TemplateWire {
            template_id: t.template_id,
            doc_type: t.doc_type,
            rules: t
                .rules
                .into_iter()
                .map(|r| FieldRuleWire {
                    key: r.key,
                    anchor: r.anchor,
                    pattern: r.pattern.as_str().to_owned(),
                    required: r.required,
                })
                .collect(),
        }
    }
}

impl Template {
    pub fn new(
        template_id: impl Into<String>,
        doc_type: impl Into<String>,
        rules: Vec<FieldRule>,
    ) -> Result<Self, ExtractionError> {
        let template = Template {
            template_id: template_id.into(),
            doc_type: doc_type.into(),
            rules,
        };
        template.validate()?;
        Ok(template)
    }

    fn validate(&self) -> Result<(), ExtractionError> {
        let invalid = |msg: String| Err(ExtractionError::InvalidTemplate(msg));
        if self.template_id.is_empty() {
            return invalid("empty templateId".into());
        }
        if self.rules.is_empty() {
            return invalid(format!("template `{}` has no rules", self.template_id));
        }
        let mut keys = BTreeSet::new();
        for rule in &self.rules {
            if rule.key.split('.').any(|seg| check_key(seg).is_err()) {
                return invalid(format!("invalid key `{}`", rule.key));
            }
            if rule.anchor.is_empty() {
                return invalid(format!("rule `{}` has an empty anchor", rule.key));
            }
            if rule.pattern.captures_len() != 2 {
                return invalid(format!(
                    "rule `{}` pattern must have exactly one capture group",
                    rule.key
                ));
            }
            if !keys.insert(rule.key.as_str()) {
                return invalid(format!("duplicate key `{}`", rule.key));
            }
        }
        // `a` and `a.b` cannot both be leaves.
        for key in &keys {
            let prefix = format!("{key}.");
            if keys.iter().any(|other| other.starts_with(&prefix)) {
                return invalid(format!("key `{key}` is both a leaf and a parent"));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ExtractionError> {
        serde_json::from_slice(bytes).map_err(|e| ExtractionError::InvalidTemplate(e.to_string()))
    }
}

/// The text layer of a source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocumentText {
    pub lines: Vec<String>,
}

impl RawDocumentText {
    pub fn new(text: &str) -> Self {
        RawDocumentText {
            lines: text.lines().map(str::to_owned).collect(),
        }
    }
}

impl From<&str> for RawDocumentText {
    fn from(text: &str) -> Self {
        RawDocumentText::new(text)
    }
}

fn apply_rule<'t>(text: &'t RawDocumentText, rule: &FieldRule) -> Option<&'t str> {
    // first line containing the anchor wins, even if its pattern then fails
    let line = text.lines.iter().find(|l| l.contains(&rule.anchor))?;
    let start = line.find(&rule.anchor)? + rule.anchor.len();
    let caps = rule.pattern.captures(&line[start..])?;
    Some(caps.get(1)?.as_str().trim())
}

/// Runs each rule in order and assembles the matched values into content.
pub fn apply_template(text: &RawDocumentText, template: &Template) -> Result<ContentMap, ExtractionError> {
    let mut content = ContentMap::new();
    for rule in &template.rules {
        match apply_rule(text, rule) {
            Some(value) => content
                .insert_path(&rule.key, value)
                .map_err(|e| ExtractionError::InvalidTemplate(e.to_string()))?,
            None if rule.required => return Err(ExtractionError::RequiredFieldMissing(rule.key.clone())),
            None => {}
        }
    }
    if content.leaf_count() == 0 {
        return Err(ExtractionError::EmptyResult);
    }
    Ok(content)
}

/// Wraps content in a document carrying the extractor's attestation.
pub fn sign_content(
    meta: Metadata,
    content: ContentMap,
    key: &KeyPair,
    cert: &Certificate,
    signed_at: Timestamp,
) -> Result<MachineReadableDocument, ValidationError> {
    let payload = extractor_payload(&content)?;
    let record = SignatureRecord {
        sig_id: sig_id_for(cert, 0),
        signer_cert: cert.clone(),
        endorsement: Endorsement::content_all(),
        payload_digest: digest(&payload),
        signature: sign_bytes(key, &payload),
        signed_at,
    };
    Ok(MachineReadableDocument {
        meta,
        content,
        extractor_signature: record,
        validator_signatures: Vec::new(),
    })
}

/// Applies `template` and signs the result as extractor. `doc_type` overrides
/// the template's document type when given.
pub fn extract_and_sign(
    text: &RawDocumentText,
    template: &Template,
    key: &KeyPair,
    cert: &Certificate,
    doc_type: Option<&str>,
    now: Timestamp,
) -> Result<MachineReadableDocument, ExtractionError> {
    let content = apply_template(text, template)?;
    let meta = Metadata::new(
        doc_type.unwrap_or(&template.doc_type),
        template.template_id.as_str(),
        now,
    );
    Ok(sign_content(meta, content, key, cert, now)?)
}

/// Templates keyed by `templateId`.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, Template>,
}

impl TemplateRegistry {
    pub fn insert(&mut self, template: Template) -> Result<(), ExtractionError> {
        if self.templates.contains_key(&template.template_id) {
            return Err(ExtractionError::DuplicateTemplateId(template.template_id));
        }
        self.templates.insert(template.template_id.clone(), template);
        Ok(())
    }

    pub fn get(&self, template_id: &str) -> Option<&Template> {
        self.templates.get(template_id)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.templates.keys()
    }
}

/// Loads every `*.template.json` file in `dir`.
pub fn load_templates(dir: &Path) -> Result<TemplateRegistry, ExtractionError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(TEMPLATE_EXTENSION))
        })
        .collect();
    paths.sort();
    let mut registry = TemplateRegistry::default();
    for path in paths {
        let bytes = fs::read(&path)?;
        let template: Template = serde_json::from_slice(&bytes).map_err(|e| ExtractionError::TemplateParse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        registry.insert(template)?;
    }
    Ok(registry)
}
