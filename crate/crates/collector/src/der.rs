//! Just enough DER to pull the issuer organization out of an X.509
//! certificate.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DerError {
    #[error("truncated DER")]
    Truncated,
    #[error("unsupported DER length")]
    BadLength,
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
}

const SEQUENCE: u8 = 0x30;
const SET: u8 = 0x31;
const OID: u8 = 0x06;
const INTEGER: u8 = 0x02;
const VERSION: u8 = 0xa0;
/// id-at-organizationName, 2.5.4.10.
const ORGANIZATION: &[u8] = &[0x55, 0x04, 0x0a];

/// Splits one TLV off the front of `buf`: `(tag, value, rest)`.
fn tlv(buf: &[u8]) -> Result<(u8, &[u8], &[u8]), DerError> {
    let (&tag, rest) = buf.split_first().ok_or(DerError::Truncated)?;
    let (&first, mut rest) = rest.split_first().ok_or(DerError::Truncated)?;
    let len = if first < 0x80 {
        first as usize
    } else {
        let n = (first & 0x7f) as usize;
        if n == 0 || n > 4 {
            return Err(DerError::BadLength);
        }
        if rest.len() < n {
            return Err(DerError::Truncated);
        }
        let len = rest[..n].iter().fold(0usize, |acc, &b| (acc << 8) | b as usize);
        rest = &rest[n..];
        len
    };
    if rest.len() < len {
        return Err(DerError::Truncated);
    }
    Ok((tag, &rest[..len], &rest[len..]))
}

fn expect(buf: &[u8], tag: u8) -> Result<(&[u8], &[u8]), DerError> {
    let (t, v, rest) = tlv(buf)?;
    if t != tag {
        return Err(DerError::UnexpectedTag {
            expected: tag,
            found: t,
        });
    }
    Ok((v, rest))
}

/// The issuer `Name` of a certificate, still DER-encoded.
pub fn issuer_name(cert: &[u8]) -> Result<&[u8], DerError> {
    let (cert, _) = expect(cert, SEQUENCE)?;
    let (tbs, _) = expect(cert, SEQUENCE)?;
    let mut rest = tbs;
    if rest.first() == Some(&VERSION) {
        rest = tlv(rest)?.2;
    }
    let (_, rest) = expect(rest, INTEGER)?;
    let (_, rest) = expect(rest, SEQUENCE)?;
    let (issuer, _) = expect(rest, SEQUENCE)?;
    Ok(issuer)
}

fn decode_string(tag: u8, v: &[u8]) -> Option<String> {
    match tag {
        // UTF8String, PrintableString, IA5String, VisibleString
        0x0c | 0x13 | 0x16 | 0x1a => Some(String::from_utf8_lossy(v).into_owned()),
        // TeletexString, treated as Latin-1
        0x14 => Some(v.iter().map(|&b| b as char).collect()),
        // BMPString
        0x1e => {
            let units: Vec<u16> = v.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
            Some(String::from_utf16_lossy(&units))
        }
        // UniversalString
        0x1c => Some(
            v.chunks_exact(4)
                .filter_map(|c| char::from_u32(u32::from_be_bytes([c[0], c[1], c[2], c[3]])))
                .collect(),
        ),
        _ => None,
    }
}

/// First `O=` attribute of an encoded `Name`.
pub fn organization(name: &[u8]) -> Result<Option<String>, DerError> {
    let mut rdns = name;
    while !rdns.is_empty() {
        let (set, rest) = expect(rdns, SET)?;
        rdns = rest;
        let mut atvs = set;
        while !atvs.is_empty() {
            let (atv, rest) = expect(atvs, SEQUENCE)?;
            atvs = rest;
            let (oid, value) = expect(atv, OID)?;
            if oid == ORGANIZATION {
                let (tag, v, _) = tlv(value)?;
                return Ok(decode_string(tag, v));
            }
        }
    }
    Ok(None)
}

/// Issuer organization of a DER certificate, or `None` when the issuer has
/// no `O=` attribute.
pub fn issuer_organization(cert: &[u8]) -> Result<Option<String>, DerError> {
    organization(issuer_name(cert)?)
}
