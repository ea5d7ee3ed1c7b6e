use super::IngestError;

/// Lowercases and drops a single trailing dot.
pub fn normalize_hostname(host: &str) -> String {
    host.trim().trim_end_matches('.').to_ascii_lowercase()
}

/// RFC 1123 host name check on an already normalized name.
pub fn is_valid_hostname(host: &str) -> bool {
    if host.is_empty() || host.len() > 253 {
        return false;
    }
    host.split('.').all(|label| {
        let b = label.as_bytes();
        !b.is_empty()
            && b.len() <= 63
            && b.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'-')
            && b[0] != b'-'
            && b[b.len() - 1] != b'-'
    })
}

/// Final DNS label, lowercased: `site.co.uk` gives `uk`.
pub fn extract_tld(domain: &str) -> Result<String, IngestError> {
    let host = normalize_hostname(domain);
    if !is_valid_hostname(&host) {
        return Err(IngestError::InvalidHostname(domain.to_string()));
    }
    match host.rsplit_once('.') {
        Some((_, tld)) => Ok(tld.to_string()),
        None => Err(IngestError::NoTld(domain.to_string())),
    }
}

/// Host part of a toplist origin such as `https://www.example.com:8443`.
pub fn domain_from_origin(origin: &str) -> Result<String, IngestError> {
    let rest = origin.trim();
    let rest = rest.split_once("://").map_or(rest, |(_, r)| r);
    let host = rest.split(['/', '?', '#']).next().unwrap_or_default();
    let host = match host.rsplit_once(':') {
        Some((h, port)) if port.bytes().all(|b| b.is_ascii_digit()) => h,
        _ => host,
    };
    let host = normalize_hostname(host);
    if is_valid_hostname(&host) && host.contains('.') {
        Ok(host)
    } else {
        Err(IngestError::InvalidHostname(origin.to_string()))
    }
}

/// Issuer organization normalization: trim, collapse whitespace, casefold.
pub fn normalize_issuer(issuer: &str) -> String {
    issuer.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tld_examples() {
        assert_eq!(extract_tld("example.com").unwrap(), "com");
        assert_eq!(extract_tld("EXAMPLE.RU.").unwrap(), "ru");
        assert_eq!(extract_tld("site.co.uk").unwrap(), "uk");
        assert!(matches!(extract_tld("localhost"), Err(IngestError::NoTld(_))));
        assert!(matches!(extract_tld("bad..name"), Err(IngestError::InvalidHostname(_))));
    }

    #[test]
    fn hostname_rules() {
        assert!(is_valid_hostname("a-b.example.org"));
        assert!(!is_valid_hostname("-a.example.org"));
        assert!(!is_valid_hostname("a_b.example.org"));
        assert!(!is_valid_hostname(&format!("{}.com", "x".repeat(64))));
    }

    #[test]
    fn origins() {
        assert_eq!(domain_from_origin("https://example.co.th").unwrap(), "example.co.th");
        assert_eq!(
            domain_from_origin("http://WWW.Example.com:8080/path").unwrap(),
            "www.example.com"
        );
        assert_eq!(domain_from_origin("example.de").unwrap(), "example.de");
        assert!(domain_from_origin("https://").is_err());
        assert!(domain_from_origin("https://intranet").is_err());
    }

    #[test]
    fn issuer_normalization() {
        assert_eq!(normalize_issuer("  Let's   Encrypt\t"), "let's encrypt");
        assert_eq!(normalize_issuer("DigiCert Inc"), normalize_issuer("DIGICERT  inc"));
    }
}
