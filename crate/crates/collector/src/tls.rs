//! A TLS 1.2 ClientHello and a reader that stops at the server's Certificate
//! message. Nothing is verified and the handshake is abandoned once the
//! certificate chain has arrived.

use std::io::{self, Read, Write};
use std::net::{IpAddr, SocketAddr, TcpStream};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::der::{self, DerError};

const CONTENT_ALERT: u8 = 21;
const CONTENT_HANDSHAKE: u8 = 22;
const HS_CLIENT_HELLO: u8 = 1;
const HS_SERVER_HELLO: u8 = 2;
const HS_CERTIFICATE: u8 = 11;
const HS_SERVER_HELLO_DONE: u8 = 14;

/// Gives up on servers that send more than this before their certificate.
const MAX_HANDSHAKE_BYTES: usize = 256 * 1024;

const CIPHER_SUITES: &[u16] = &[
    0xc02b, 0xc02f, 0xc02c, 0xc030, 0xcca9, 0xcca8, 0xc009, 0xc013, 0xc00a, 0xc014, 0x009c, 0x009d, 0x002f, 0x0035,
    0x00ff,
];
const GROUPS: &[u16] = &[0x001d, 0x0017, 0x0018];
const SIGNATURE_SCHEMES: &[u16] = &[
    0x0403, 0x0503, 0x0603, 0x0804, 0x0805, 0x0806, 0x0401, 0x0501, 0x0601, 0x0201,
];

#[derive(Debug, thiserror::Error)]
pub enum TlsError {
    #[error("connection refused")]
    Refused,
    #[error("timeout")]
    Timeout,
    #[error("alert {0}")]
    Alert(u8),
    #[error("server sent no certificate")]
    NoCertificate,
    #[error("protocol error: {0}")]
    Protocol(&'static str),
    #[error("certificate: {0}")]
    Der(#[from] DerError),
    #[error("{0}")]
    Io(io::Error),
}

impl From<io::Error> for TlsError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::ConnectionRefused => TlsError::Refused,
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TlsError::Timeout,
            io::ErrorKind::UnexpectedEof => TlsError::Protocol("connection closed during handshake"),
            _ => TlsError::Io(e),
        }
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_u24(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_be_bytes()[1..]);
}

fn extension(out: &mut Vec<u8>, kind: u16, body: &[u8]) {
    put_u16(out, kind);
    put_u16(out, body.len() as u16);
    out.extend_from_slice(body);
}

fn u16_list(items: &[u16]) -> Vec<u8> {
    let mut v = Vec::with_capacity(2 + 2 * items.len());
    put_u16(&mut v, (2 * items.len()) as u16);
    for &i in items {
        put_u16(&mut v, i);
    }
    v
}

/// A complete ClientHello record. `sni` is omitted for IP literals.
pub fn client_hello(sni: Option<&str>, random: [u8; 32]) -> Vec<u8> {
    let mut body = vec![0x03, 0x03];
    body.extend_from_slice(&random);
    body.push(0);
    body.extend(u16_list(CIPHER_SUITES));
    body.extend_from_slice(&[1, 0]);

    let mut ext = Vec::new();
    if let Some(host) = sni.filter(|h| h.parse::<IpAddr>().is_err()) {
        let mut sn = Vec::new();
        put_u16(&mut sn, (host.len() + 3) as u16);
        sn.push(0);
        put_u16(&mut sn, host.len() as u16);
        sn.extend_from_slice(host.as_bytes());
        extension(&mut ext, 0x0000, &sn);
    }
    extension(&mut ext, 0x000a, &u16_list(GROUPS));
    extension(&mut ext, 0x000b, &[1, 0]);
    extension(&mut ext, 0x000d, &u16_list(SIGNATURE_SCHEMES));
    extension(&mut ext, 0x0017, &[]);
    extension(&mut ext, 0xff01, &[0]);
    put_u16(&mut body, ext.len() as u16);
    body.extend(ext);

    let mut hs = vec![HS_CLIENT_HELLO];
    put_u24(&mut hs, body.len());
    hs.extend(body);

    let mut record = vec![CONTENT_HANDSHAKE, 0x03, 0x01];
    put_u16(&mut record, hs.len() as u16);
    record.extend(hs);
    record
}

fn client_random() -> [u8; 32] {
    // Not a secret: the handshake is never completed.
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let mut r = [0u8; 32];
    let mut x = nanos as u64 ^ 0x9e37_79b9_7f4a_7c15;
    for chunk in r.chunks_mut(8) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        chunk.copy_from_slice(&x.to_be_bytes());
    }
    r
}

/// Reads handshake records until the Certificate message and returns the
/// DER certificates in the order the server sent them.
pub fn read_certificates(stream: &mut impl Read) -> Result<Vec<Vec<u8>>, TlsError> {
    let mut hs = Vec::new();
    let mut total = 0;
    loop {
        // Consume every complete handshake message buffered so far.
        while hs.len() >= 4 {
            let len = u32::from_be_bytes([0, hs[1], hs[2], hs[3]]) as usize;
            if hs.len() < 4 + len {
                break;
            }
            let msg: Vec<u8> = hs.drain(..4 + len).collect();
            match msg[0] {
                HS_CERTIFICATE => return parse_certificate_list(&msg[4..]),
                HS_SERVER_HELLO_DONE => return Err(TlsError::NoCertificate),
                HS_SERVER_HELLO if msg.get(4..6) != Some(&[0x03, 0x03][..]) => {
                    return Err(TlsError::Protocol("server did not select TLS 1.2"));
                }
                _ => {}
            }
        }
        let mut header = [0u8; 5];
        stream.read_exact(&mut header)?;
        let len = u16::from_be_bytes([header[3], header[4]]) as usize;
        total += 5 + len;
        if total > MAX_HANDSHAKE_BYTES {
            return Err(TlsError::Protocol("handshake too large"));
        }
        let mut payload = vec![0u8; len];
        stream.read_exact(&mut payload)?;
        match header[0] {
            CONTENT_HANDSHAKE => hs.extend(payload),
            CONTENT_ALERT => return Err(TlsError::Alert(payload.get(1).copied().unwrap_or(0))),
            _ => return Err(TlsError::Protocol("unexpected record type")),
        }
    }
}

fn parse_certificate_list(body: &[u8]) -> Result<Vec<Vec<u8>>, TlsError> {
    let bad = TlsError::Protocol("malformed Certificate message");
    if body.len() < 3 {
        return Err(bad);
    }
    let total = u32::from_be_bytes([0, body[0], body[1], body[2]]) as usize;
    let mut rest = body
        .get(3..3 + total)
        .ok_or(TlsError::Protocol("malformed Certificate message"))?;
    let mut certs = Vec::new();
    while !rest.is_empty() {
        if rest.len() < 3 {
            return Err(bad);
        }
        let len = u32::from_be_bytes([0, rest[0], rest[1], rest[2]]) as usize;
        let cert = rest
            .get(3..3 + len)
            .ok_or(TlsError::Protocol("malformed Certificate message"))?;
        certs.push(cert.to_vec());
        rest = &rest[3 + len..];
    }
    if certs.is_empty() {
        return Err(TlsError::NoCertificate);
    }
    Ok(certs)
}

/// Connects, sends a ClientHello and returns the leaf certificate.
pub fn fetch_leaf_certificate(addr: SocketAddr, sni: &str, timeout: Duration) -> Result<Vec<u8>, TlsError> {
    let mut s = TcpStream::connect_timeout(&addr, timeout)?;
    s.set_read_timeout(Some(timeout))?;
    s.set_write_timeout(Some(timeout))?;
    s.write_all(&client_hello(Some(sni), client_random()))?;
    let mut certs = read_certificates(&mut s)?;
    Ok(certs.swap_remove(0))
}

/// Issuer organization of the leaf certificate at `addr`, with whitespace
/// collapsed. `Ok(None)` when the issuer has no `O=` attribute.
pub fn fetch_leaf_issuer(addr: SocketAddr, sni: &str, timeout: Duration) -> Result<Option<String>, TlsError> {
    let cert = fetch_leaf_certificate(addr, sni, timeout)?;
    Ok(der::issuer_organization(&cert)?.map(|o| o.split_whitespace().collect::<Vec<_>>().join(" ")))
}
