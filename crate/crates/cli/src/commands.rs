use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use idstack_core::api::{AppendSignatureRequest, DocumentConfidence, DocumentSetCorrelation, SignatureListing};
use idstack_core::clock::Clock;
use idstack_core::pki::issue_certificate;
use idstack_core::{
    add_signature, confidence, correlate, endorsement_payload, extract_and_sign, fingerprint, list_signatures,
    load_templates, parse_document, serialize_document, sign_bytes, verify_chain, Certificate, DocumentId, FileStore,
    KeyPair, MachineReadableDocument, RawDocumentText, ScoreWeights, StoreError, TrustAnchors,
};
use serde::Serialize;

use crate::config::{read_file, write_atomic, CliConfig};
use crate::endorse::parse_endorsement;
use crate::error::CliError;
use crate::remote::Remote;

/// What a command hands back to `main`: JSON for stdout, an optional
/// human-readable table for stderr, and whether verification failed.
pub struct Outcome {
    pub json: String,
    pub table: Option<String>,
    pub verification_failed: bool,
}

impl Outcome {
    fn json<T: Serialize>(value: &T) -> Self {
        let mut json = serde_json::to_string_pretty(value).expect("output serializes");
        json.push('\n');
        Outcome {
            json,
            table: None,
            verification_failed: false,
        }
    }
}

pub struct Context {
    pub config: CliConfig,
    pub clock: Box<dyn Clock>,
}

impl Context {
    fn remote(&self) -> Option<Remote> {
        self.config.remote.as_deref().map(Remote::new)
    }

    fn store(&self) -> Result<Option<FileStore>, CliError> {
        self.config
            .store_root
            .as_ref()
            .map(|root| FileStore::open(root).map_err(CliError::from))
            .transpose()
    }

    fn trust(&self) -> Result<TrustAnchors, CliError> {
        match &self.config.trust_anchor_file {
            Some(path) => Ok(TrustAnchors::load(path)?),
            None => Ok(TrustAnchors::default()),
        }
    }

    fn weights(&self) -> Result<ScoreWeights, CliError> {
        match &self.config.weights_file {
            Some(path) => Ok(ScoreWeights::load_or_default(path)?),
            None => Ok(ScoreWeights::default()),
        }
    }
}

fn load_document(path: &Path) -> Result<MachineReadableDocument, CliError> {
    Ok(parse_document(&read_file(path)?)?)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct KeygenOutput {
    fingerprint: String,
    key_file: String,
    cert_file: String,
}

pub struct KeygenArgs {
    pub name: String,
    pub email: String,
    pub days: u32,
    pub out: PathBuf,
    pub force: bool,
    pub from_key: Option<PathBuf>,
}

/// Writes `<out>.key` (unless an existing key is supplied) and `<out>.cert.json`.
pub fn keygen(ctx: &Context, args: KeygenArgs) -> Result<Outcome, CliError> {
    let key_path = args.from_key.clone().unwrap_or_else(|| with_suffix(&args.out, ".key"));
    let cert_path = with_suffix(&args.out, ".cert.json");
    let mut targets = vec![&cert_path];
    if args.from_key.is_none() {
        targets.push(&key_path);
    }
    for path in &targets {
        if path.exists() {
            if !args.force {
                return Err(CliError::Usage(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
            std::fs::remove_file(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    let key = match &args.from_key {
        Some(path) => KeyPair::load(path)?,
        None => KeyPair::generate(&mut rand_core::OsRng),
    };
    let cert = issue_certificate(&key, &args.name, &args.email, args.days, ctx.clock.now())?;
    if args.from_key.is_none() {
        key.save(&key_path)?;
    }
    write_atomic(&cert_path, cert.to_json().as_bytes())?;
    Ok(Outcome::json(&KeygenOutput {
        fingerprint: fingerprint(&cert),
        key_file: key_path.display().to_string(),
        cert_file: cert_path.display().to_string(),
    }))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DocumentOutput {
    document_id: DocumentId,
    sig_id: String,
    signature_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    revision: Option<u64>,
}

pub struct ExtractArgs {
    pub text: PathBuf,
    pub template: String,
    pub key: PathBuf,
    pub cert: PathBuf,
    pub out: PathBuf,
    pub doc_type: Option<String>,
}

pub fn extract(ctx: &Context, args: ExtractArgs) -> Result<Outcome, CliError> {
    let templates = load_templates(&ctx.config.template_dir)?;
    let template = templates
        .get(&args.template)
        .ok_or_else(|| CliError::Domain(format!("unknown template `{}`", args.template)))?;
    let text = String::from_utf8(read_file(&args.text)?)
        .map_err(|_| CliError::Domain(format!("{} is not UTF-8", args.text.display())))?;
    let key = KeyPair::load(&args.key)?;
    let cert = Certificate::load(&args.cert)?;
    let doc = extract_and_sign(
        &RawDocumentText::new(&text),
        template,
        &key,
        &cert,
        args.doc_type.as_deref(),
        ctx.clock.now(),
    )?;
    let id = DocumentId::of(&doc)?;
    let revision = if let Some(remote) = ctx.remote() {
        Some(remote.upload(&doc)?.revision)
    } else if let Some(store) = ctx.store()? {
        Some(store.put(&doc)?.1.revision)
    } else {
        None
    };
    write_atomic(&args.out, &serialize_document(&doc))?;
    Ok(Outcome::json(&DocumentOutput {
        document_id: id,
        sig_id: doc.extractor_signature.sig_id.clone(),
        signature_count: doc.signature_count(),
        revision,
    }))
}

pub struct SignArgs {
    pub doc: PathBuf,
    pub key: PathBuf,
    pub cert: PathBuf,
    pub endorse: String,
}

pub fn sign(ctx: &Context, args: SignArgs) -> Result<Outcome, CliError> {
    let endorsement = parse_endorsement(&args.endorse)?;
    let doc = load_document(&args.doc)?;
    let key = KeyPair::load(&args.key)?;
    let cert = Certificate::load(&args.cert)?;
    let id = DocumentId::of(&doc)?;
    let now = ctx.clock.now();

    let (next, revision) = if let Some(remote) = ctx.remote() {
        let current = remote.document(&id)?;
        let payload = endorsement_payload(&current.document, &endorsement)?;
        let request = AppendSignatureRequest {
            signer_certificate: cert,
            endorsement,
            signature: sign_bytes(&key, &payload),
            signed_at: now,
            expected_revision: current.revision,
        };
        let stored = remote.append(&id, &request)?;
        (stored.document, Some(stored.revision))
    } else {
        let next = add_signature(&doc, &key, &cert, endorsement, now)?;
        let revision = match ctx.store()? {
            Some(store) => Some(match store.get(&id) {
                Ok((_, rev)) => store.update(&id, rev.revision, &next)?.revision,
                Err(StoreError::UnknownDocument(_)) => store.put(&next)?.1.revision,
                Err(e) => return Err(e.into()),
            }),
            None => None,
        };
        (next, revision)
    };
    write_atomic(&args.doc, &serialize_document(&next))?;
    let record = next.validator_signatures.last().expect("a signature was appended");
    Ok(Outcome::json(&DocumentOutput {
        document_id: id,
        sig_id: record.sig_id.clone(),
        signature_count: next.signature_count(),
        revision,
    }))
}

fn signature_table(listing: &SignatureListing) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "document {}", listing.document_id);
    let _ = writeln!(
        out,
        "{:<3} {:<10} {:<20} {:<10} {:<6} {:<7} reason",
        "#", "role", "signer", "kind", "valid", "trusted"
    );
    for (i, row) in listing.signatures.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<3} {:<10} {:<20} {:<10} {:<6} {:<7} {}",
            i,
            row.role,
            row.signer_name,
            row.kind.as_str(),
            if row.effectively_valid { "yes" } else { "NO" },
            if row.trusted { "yes" } else { "no" },
            row.reason
        );
    }
    out
}

pub fn verify(ctx: &Context, doc_path: &Path) -> Result<Outcome, CliError> {
    let doc = load_document(doc_path)?;
    let id = DocumentId::of(&doc)?;
    let listing = match ctx.remote() {
        Some(remote) => remote.signatures(&id)?,
        None => {
            let report = verify_chain(&doc, &ctx.trust()?, ctx.clock.now())?;
            let rows = list_signatures(&doc, &report);
            SignatureListing::new(id, &report, rows)
        }
    };
    let mut outcome = Outcome::json(&listing);
    outcome.table = Some(signature_table(&listing));
    outcome.verification_failed = !listing.all_effectively_valid;
    Ok(outcome)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ScoreOutput {
    documents: Vec<DocumentConfidence>,
    correlation: Option<DocumentSetCorrelation>,
}

pub fn score(ctx: &Context, doc_paths: &[PathBuf]) -> Result<Outcome, CliError> {
    let docs = doc_paths
        .iter()
        .map(|p| load_document(p))
        .collect::<Result<Vec<_>, _>>()?;
    let ids = docs.iter().map(DocumentId::of).collect::<Result<Vec<_>, _>>()?;
    let output = match ctx.remote() {
        Some(remote) => ScoreOutput {
            documents: ids.iter().map(|id| remote.confidence(id)).collect::<Result<_, _>>()?,
            correlation: if ids.len() >= 2 {
                Some(remote.correlation(&ids)?)
            } else {
                None
            },
        },
        None => {
            let trust = ctx.trust()?;
            let weights = ctx.weights()?;
            let now = ctx.clock.now();
            let mut documents = Vec::with_capacity(docs.len());
            for (doc, id) in docs.iter().zip(&ids) {
                let report = verify_chain(doc, &trust, now)?;
                documents.push(DocumentConfidence {
                    document_id: id.clone(),
                    score: confidence(doc, &report, &trust, &weights)?,
                });
            }
            let correlation = if docs.len() >= 2 {
                Some(DocumentSetCorrelation {
                    document_ids: ids.clone(),
                    score: correlate(&docs)?,
                })
            } else {
                None
            };
            ScoreOutput { documents, correlation }
        }
    };
    let mut table = String::new();
    for d in &output.documents {
        let _ = writeln!(table, "confidence {:.4}  {}", d.score.value, d.document_id);
    }
    if let Some(c) = &output.correlation {
        let _ = writeln!(
            table,
            "correlation {:.4}  ({} of {} shared fields agree)",
            c.score.value, c.score.matches, c.score.comparisons
        );
    }
    let mut outcome = Outcome::json(&output);
    outcome.table = Some(table);
    Ok(outcome)
}
