//! Parsing of the `--endorse` flag.
//!
//! ```text
//! content                      CONTENT over ALL
//! content:name,dob             CONTENT over the listed paths
//! signature:ID[,ID...]         SIGNATURE over earlier records
//! both:name,dob+signature:ID   BOTH; `both+signature:ID` endorses ALL content
//! ```

use idstack_core::{ContentSelection, Endorsement};

use crate::error::CliError;

fn list(text: &str, what: &str) -> Result<Vec<String>, CliError> {
    let items: Vec<String> = text.split(',').map(str::trim).map(str::to_owned).collect();
    if items.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("empty {what} in --endorse")));
    }
    Ok(items)
}

fn selection(paths: Option<&str>) -> Result<ContentSelection, CliError> {
    match paths {
        None | Some("ALL") => Ok(ContentSelection::All),
        Some(p) => Ok(ContentSelection::Paths(list(p, "path")?.into_iter().collect())),
    }
}

pub fn parse_endorsement(spec: &str) -> Result<Endorsement, CliError> {
    let bad = || CliError::Usage(format!("cannot parse --endorse `{spec}`"));
    if let Some(rest) = spec.strip_prefix("both") {
        let (paths, targets) = rest.split_once("+signature:").ok_or_else(bad)?;
        let paths = match paths {
            "" => None,
            p => Some(p.strip_prefix(':').ok_or_else(bad)?),
        };
        return Ok(Endorsement::both(selection(paths)?, list(targets, "target")?));
    }
    if let Some(targets) = spec.strip_prefix("signature:") {
        return Ok(Endorsement::signature(list(targets, "target")?));
    }
    if spec == "content" {
        return Ok(Endorsement::content_all());
    }
    if let Some(paths) = spec.strip_prefix("content:") {
        return Ok(match selection(Some(paths))? {
            ContentSelection::All => Endorsement::content_all(),
            ContentSelection::Paths(p) => Endorsement::content_paths(p),
        });
    }
    Err(bad())
}

#[cfg(test)]
mod tests {
    use super::*;
    use idstack_core::EndorsementKind;

    #[test]
    fn content_forms() {
        assert_eq!(parse_endorsement("content").unwrap(), Endorsement::content_all());
        assert_eq!(parse_endorsement("content:ALL").unwrap(), Endorsement::content_all());
        assert_eq!(
            parse_endorsement("content:dob,fullName").unwrap(),
            Endorsement::content_paths(["dob", "fullName"])
        );
    }

    #[test]
    fn signature_form() {
        let e = parse_endorsement("signature:abc#0,def#1").unwrap();
        assert_eq!(e, Endorsement::signature(["abc#0", "def#1"]));
    }

    #[test]
    fn both_form() {
        let e = parse_endorsement("both:name,dob+signature:abc#0").unwrap();
        assert_eq!(e.kind, EndorsementKind::Both);
        assert_eq!(
            e.content_keys,
            Some(ContentSelection::Paths(["dob".to_owned(), "name".to_owned()].into()))
        );
        assert_eq!(e.targets(), ["abc#0"]);
        let all = parse_endorsement("both+signature:abc#0").unwrap();
        assert_eq!(all.content_keys, Some(ContentSelection::All));
    }

    #[test]
    fn rejects_garbage() {
        for spec in [
            "",
            "contents",
            "signature:",
            "both:name",
            "both-x+signature:a",
            "content:a,,b",
        ] {
            assert!(parse_endorsement(spec).is_err(), "{spec}");
        }
    }
}
