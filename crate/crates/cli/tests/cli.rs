//! `idstack` stdout pinned against goldens, the exit-code contract, and
//! parity between local and `--remote` execution.

mod support;

use serde_json::Value;
use support::{fixture_bytes, golden, spawn_server, Workspace, EXTRACTOR_SIG};

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn keygen_from_fixed_seed_is_reproducible() {
    let mut ws = Workspace::new();
    // the fixture certificates were issued at the start of the year
    ws.clock = "2026-01-01T00:00:00Z".into();
    let out = ws.ok(&[
        "keygen",
        "--name",
        "Validator A",
        "--email",
        "a@bank.example",
        "--days",
        "3650",
        "--out",
        "again",
        "--from-key",
        "keys/validator_a.key",
    ]);
    golden("keygen.json", &out);
    assert_eq!(ws.read("again.cert.json"), fixture_bytes("certs/validator_a.cert.json"));
}

#[test]
fn keygen_refuses_to_overwrite() {
    let ws = Workspace::new();
    let args = ["keygen", "--name", "N", "--email", "n@x.example", "--out", "fresh"];
    let first = json(&ws.ok(&args));
    assert_eq!(first["keyFile"], "fresh.key");
    assert_eq!(ws.read("fresh.key").len(), 45);
    let out = ws.run(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    let second = json(&ws.ok(&forced));
    assert_ne!(first["fingerprint"], second["fingerprint"]);
}

#[test]
fn offline_chain_matches_fixture_documents() {
    let ws = Workspace::new();
    let out = ws.ok(&[
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
    golden("extract.json", &out);
    let out = ws.ok(&[
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
    golden("sign_a.json", &out);
    let out = ws.ok(&[
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
    golden("sign_b.json", &out);
    assert_eq!(
        ws.read("docs/national_id.mrd.json"),
        fixture_bytes("docs/national_id.mrd.json")
    );

    let out = ws.ok(&["--trust", "trust.json", "verify", "--doc", "docs/national_id.mrd.json"]);
    golden("verify.json", &out);
}

#[test]
fn score_three_documents() {
    let ws = Workspace::new();
    ws.build_national_id();
    for (text, template) in [("birth_certificate", "lk-birth-v1"), ("degree", "uni-degree-v1")] {
        ws.ok(&[
            "extract",
            "--text",
            &format!("texts/{text}.txt"),
            "--template",
            template,
            "--key",
            "keys/extractor.key",
            "--cert",
            "certs/extractor.cert.json",
            "--out",
            &format!("docs/{text}.mrd.json"),
        ]);
        assert_eq!(
            ws.read(&format!("docs/{text}.mrd.json")),
            fixture_bytes(&format!("docs/{text}.mrd.json"))
        );
    }
    let out = ws.run(&[
        "--trust",
        "trust.json",
        "--pretty",
        "score",
        "--docs",
        "docs/national_id.mrd.json",
        "docs/birth_certificate.mrd.json",
        "docs/degree.mrd.json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    golden("score.json", &out.stdout);
    golden("score.stderr.txt", &out.stderr);
}

#[test]
fn store_tracks_revisions() {
    let ws = Workspace::new();
    let store = ["--store", "store"];
    let extract = [
        "extract",
        "--text",
        "texts/degree.txt",
        "--template",
        "uni-degree-v1",
        "--key",
        "keys/extractor.key",
        "--cert",
        "certs/extractor.cert.json",
        "--out",
        "docs/degree.mrd.json",
    ];
    let out = json(&ws.ok(&[&store[..], &extract[..]].concat()));
    assert_eq!(out["revision"], 1);
    let sign = [
        "sign",
        "--doc",
        "docs/degree.mrd.json",
        "--key",
        "keys/validator_a.key",
        "--cert",
        "certs/validator_a.cert.json",
        "--endorse",
        "content:fullName,degree",
    ];
    let out = json(&ws.ok(&[&store[..], &sign[..]].concat()));
    assert_eq!(
        (out["revision"].as_u64(), out["signatureCount"].as_u64()),
        (Some(2), Some(2))
    );
    let id = out["documentId"].as_str().unwrap();
    assert_eq!(
        ws.read(&format!("store/{id}.mrd.json")),
        ws.read("docs/degree.mrd.json")
    );
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["--help"]).status.code(), Some(0));
    assert_eq!(ws.run(&["--version"]).status.code(), Some(0));
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ws.run(&["verify"]).status.code(), Some(1));
    assert_eq!(
        ws.run(&["verify", "--doc", "docs/absent.mrd.json"]).status.code(),
        Some(1)
    );

    let missing = ws.run(&[
        "extract",
        "--text",
        "texts/national_id_missing_nic.txt",
        "--template",
        "lk-nic-v1",
        "--key",
        "keys/extractor.key",
        "--cert",
        "certs/extractor.cert.json",
        "--out",
        "docs/x.mrd.json",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("`nic`"));
    assert!(!ws.path("docs/x.mrd.json").exists());

    let unknown = ws.run(&[
        "extract",
        "--text",
        "texts/national_id.txt",
        "--template",
        "nope",
        "--key",
        "keys/extractor.key",
        "--cert",
        "certs/extractor.cert.json",
        "--out",
        "docs/x.mrd.json",
    ]);
    assert_eq!(unknown.status.code(), Some(2));

    ws.build_national_id();
    let bad_path = ws.run(&[
        "sign",
        "--doc",
        "docs/national_id.mrd.json",
        "--key",
        "keys/validator_a.key",
        "--cert",
        "certs/validator_a.cert.json",
        "--endorse",
        "content:address.zip",
    ]);
    assert_eq!(bad_path.status.code(), Some(2));
    let bad_spec = ws.run(&[
        "sign",
        "--doc",
        "docs/national_id.mrd.json",
        "--key",
        "keys/validator_a.key",
        "--cert",
        "certs/validator_a.cert.json",
        "--endorse",
        "everything",
    ]);
    assert_eq!(bad_spec.status.code(), Some(1));

    // flip one content value after signing
    let text = String::from_utf8(ws.read("docs/national_id.mrd.json")).unwrap();
    std::fs::write(
        ws.path("docs/national_id.mrd.json"),
        text.replace("Colombo 03", "Colombo 07"),
    )
    .unwrap();
    let tampered = ws.run(&["--trust", "trust.json", "verify", "--doc", "docs/national_id.mrd.json"]);
    assert_eq!(tampered.status.code(), Some(3));
    golden("verify_tampered.json", &tampered.stdout);

    let junk = ws.path("docs/junk.mrd.json");
    std::fs::write(&junk, b"{\"meta\":1}").unwrap();
    assert_eq!(
        ws.run(&["verify", "--doc", "docs/junk.mrd.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn untrusted_signer_is_reported_but_valid() {
    let ws = Workspace::new();
    ws.ok(&[
        "extract",
        "--text",
        "texts/degree.txt",
        "--template",
        "uni-degree-v1",
        "--key",
        "keys/extractor.key",
        "--cert",
        "certs/extractor.cert.json",
        "--out",
        "docs/degree.mrd.json",
    ]);
    ws.ok(&[
        "sign",
        "--doc",
        "docs/degree.mrd.json",
        "--key",
        "keys/outsider.key",
        "--cert",
        "certs/outsider.cert.json",
        "--endorse",
        "content",
    ]);
    let listing = json(&ws.ok(&["--trust", "trust.json", "verify", "--doc", "docs/degree.mrd.json"]));
    let outsider = &listing["signatures"][1];
    assert_eq!(outsider["effectivelyValid"], true);
    assert_eq!(outsider["trusted"], false);
    assert_eq!(outsider["reason"], "untrusted signer");
    let score = json(&ws.ok(&["--trust", "trust.json", "score", "--docs", "docs/degree.mrd.json"]));
    assert_eq!(
        score["documents"][0]["contributions"][1]["effectiveWeight"].as_f64(),
        Some(0.075)
    );
    assert!(score["correlation"].is_null());
}

#[test]
fn remote_mode_matches_local() {
    let ws = Workspace::new();
    let base = spawn_server(&ws.path("server-store"), false);
    let remote = ["--remote", base.as_str()];

    let extract = [
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
    ];
    let out = json(&ws.ok(&[&remote[..], &extract[..]].concat()));
    assert_eq!(out["revision"], 1);
    let sign_a = [
        "sign",
        "--doc",
        "docs/national_id.mrd.json",
        "--key",
        "keys/validator_a.key",
        "--cert",
        "certs/validator_a.cert.json",
        "--endorse",
        "content",
    ];
    let out = json(&ws.ok(&[&remote[..], &sign_a[..]].concat()));
    assert_eq!(out["revision"], 2);
    let spec = format!("signature:{EXTRACTOR_SIG}");
    let sign_b = [
        "sign",
        "--doc",
        "docs/national_id.mrd.json",
        "--key",
        "keys/validator_b.key",
        "--cert",
        "certs/validator_b.cert.json",
        "--endorse",
        &spec,
    ];
    ws.ok(&[&remote[..], &sign_b[..]].concat());
    assert_eq!(
        ws.read("docs/national_id.mrd.json"),
        fixture_bytes("docs/national_id.mrd.json")
    );

    let verify = ["verify", "--doc", "docs/national_id.mrd.json"];
    let local = ws.ok(&[&["--trust", "trust.json"][..], &verify[..]].concat());
    assert_eq!(ws.ok(&[&remote[..], &verify[..]].concat()), local);

    for (text, template) in [("birth_certificate", "lk-birth-v1"), ("degree", "uni-degree-v1")] {
        let extract = [
            "extract",
            "--text",
            &format!("texts/{text}.txt"),
            "--template",
            template,
            "--key",
            "keys/extractor.key",
            "--cert",
            "certs/extractor.cert.json",
            "--out",
            &format!("docs/{text}.mrd.json"),
        ];
        ws.ok(&[&remote[..], &extract[..]].concat());
    }
    let score = [
        "score",
        "--docs",
        "docs/national_id.mrd.json",
        "docs/birth_certificate.mrd.json",
        "docs/degree.mrd.json",
    ];
    let local = ws.ok(&[&["--trust", "trust.json"][..], &score[..]].concat());
    assert_eq!(ws.ok(&[&remote[..], &score[..]].concat()), local);

    let down = ws.run(&[
        "--remote",
        "http://127.0.0.1:9",
        "verify",
        "--doc",
        "docs/national_id.mrd.json",
    ]);
    assert_eq!(down.status.code(), Some(1));
}
