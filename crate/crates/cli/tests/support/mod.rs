//! Shared scaffolding for the CLI tests: a scratch directory seeded with the
//! fixtures, a runner for the built binary, golden comparison and an
//! in-process server for `--remote`.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use idstack_core::{FileStore, FixedClock, ScoreWeights, Timestamp, TrustAnchors};

pub const CLOCK: &str = "2026-03-01T09:00:00Z";
pub const EXTRACTOR_SIG: &str = "f1d394a08133cb5e57d2d53c72fe63ca4b8ec9f1202bcd08c72cd5141e657dbd#0";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_bytes(rel: &str) -> Vec<u8> {
    std::fs::read(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub clock: String,
}

impl Workspace {
    /// Templates, texts, keys, certificates and trust anchors; no documents.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["templates", "texts", "keys", "certs"] {
            copy_dir(&fixtures().join(sub), &dir.path().join(sub));
        }
        std::fs::copy(fixtures().join("trust.json"), dir.path().join("trust.json")).unwrap();
        std::fs::create_dir(dir.path().join("docs")).unwrap();
        Workspace {
            dir,
            clock: CLOCK.to_owned(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn read(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }

    /// Runs `idstack` inside the workspace with trust.json and templates/ as
    /// the configuration home.
    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_idstack"))
            .current_dir(self.dir.path())
            .env_remove("IDSTACK_HOME")
            .env("IDSTACK_CLOCK", &self.clock)
            .args(args)
            .output()
            .expect("spawn idstack")
    }

    pub fn ok(&self, args: &[&str]) -> Vec<u8> {
        let out = self.run(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "idstack {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    }

    /// Extractor, validator A over all content, validator B over the extractor's signature.
    pub fn build_national_id(&self) {
        self.ok(&[
            "extract",
            "--text",
            "texts/national_id.txt",
            "--template",
            "lk-nic-v1",
            "--key",
            "keys/extractor.key",
            "--cert",
            "certs/extractor.cert.json",
            "--out",
            "docs/national_id.mrd.json",
        ]);
        self.ok(&[
            "sign",
            "--doc",
            "docs/national_id.mrd.json",
            "--key",
            "keys/validator_a.key",
            "--cert",
            "certs/validator_a.cert.json",
            "--endorse",
            "content",
        ]);
        self.ok(&[
            "sign",
            "--doc",
            "docs/national_id.mrd.json",
            "--key",
            "keys/validator_b.key",
            "--cert",
            "certs/validator_b.cert.json",
            "--endorse",
            &format!("signature:{EXTRACTOR_SIG}"),
        ]);
    }
}

pub fn golden(name: &str, actual: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("IDSTACK_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(
        String::from_utf8_lossy(actual),
        String::from_utf8_lossy(&expected),
        "output differs from golden {name}"
    );
}

/// Serves the fixtures' templates and trust anchors over a fresh store on
/// an ephemeral port, optionally holding the fixture extractor key. The
/// server lives until the test process exits.
pub fn spawn_server(store: &Path, with_extractor: bool) -> String {
    let fixture = fixtures();
    let extractor = with_extractor.then(|| {
        (
            idstack_core::KeyPair::load(&fixture.join("keys/extractor.key")).unwrap(),
            idstack_core::Certificate::load(&fixture.join("certs/extractor.cert.json")).unwrap(),
        )
    });
    let state = idstack_server::AppState {
        store: FileStore::open(store).unwrap(),
        templates: idstack_core::load_templates(&fixtures().join("templates")).unwrap(),
        trust: TrustAnchors::load(&fixtures().join("trust.json")).unwrap(),
        weights: ScoreWeights::default(),
        extractor,
        clock: Box::new(FixedClock(Timestamp::parse(CLOCK).unwrap())),
    };
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, idstack_server::router(Arc::new(state)))
                .await
                .unwrap();
        });
    });
    format!("http://{addr}")
}
