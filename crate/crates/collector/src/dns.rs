//! Stub DNS client: one question per message, UDP first, TCP when the
//! answer comes back truncated.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicU16, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum QueryType {
    A = 1,
    Ns = 2,
    Cname = 5,
    Aaaa = 28,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RData {
    A(Ipv4Addr),
    Aaaa(Ipv6Addr),
    Ns(String),
    Cname(String),
    Other(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceRecord {
    pub name: String,
    pub ttl: u32,
    pub data: RData,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: u16,
    pub flags: u16,
    pub answers: Vec<ResourceRecord>,
}

pub const FLAG_RESPONSE: u16 = 0x8000;
pub const FLAG_TRUNCATED: u16 = 0x0200;
pub const FLAG_RECURSION_DESIRED: u16 = 0x0100;

impl Message {
    pub fn rcode(&self) -> u8 {
        (self.flags & 0x000f) as u8
    }

    pub fn truncated(&self) -> bool {
        self.flags & FLAG_TRUNCATED != 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DnsError {
    #[error("timeout")]
    Timeout,
    #[error("nxdomain")]
    NxDomain,
    #[error("servfail")]
    ServFail,
    #[error("refused")]
    Refused,
    #[error("rcode {0}")]
    Rcode(u8),
    #[error("malformed response: {0}")]
    Malformed(&'static str),
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl DnsError {
    /// Short tag used in record notes.
    pub fn note(&self) -> String {
        match self {
            DnsError::Io(e) if e.kind() == io::ErrorKind::ConnectionRefused => "connection refused".into(),
            e => e.to_string(),
        }
    }
}

fn encode_name(name: &str, out: &mut Vec<u8>) -> Result<(), DnsError> {
    let name = name.trim_end_matches('.');
    if !name.is_empty() {
        for label in name.split('.') {
            if label.is_empty() || label.len() > 63 {
                return Err(DnsError::InvalidName(name.to_string()));
            }
            out.push(label.len() as u8);
            out.extend_from_slice(label.as_bytes());
        }
    }
    out.push(0);
    if out.len() > 255 + 12 {
        return Err(DnsError::InvalidName(name.to_string()));
    }
    Ok(())
}

/// A recursion-desired query for `name`.
pub fn encode_query(id: u16, name: &str, qtype: QueryType) -> Result<Vec<u8>, DnsError> {
    let mut out = Vec::with_capacity(32 + name.len());
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&FLAG_RECURSION_DESIRED.to_be_bytes());
    out.extend_from_slice(&[0, 1, 0, 0, 0, 0, 0, 0]);
    encode_name(name, &mut out)?;
    out.extend_from_slice(&(qtype as u16).to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DnsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(DnsError::Malformed("unexpected end of message"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DnsError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DnsError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads a possibly compressed name, leaving the cursor after it.
    fn name(&mut self) -> Result<String, DnsError> {
        let mut labels: Vec<String> = Vec::new();
        let mut pos = self.pos;
        let mut resume = None;
        let mut jumps = 0;
        loop {
            let len = *self.buf.get(pos).ok_or(DnsError::Malformed("name runs past end"))? as usize;
            match len & 0xc0 {
                0x00 if len == 0 => {
                    pos += 1;
                    break;
                }
                0x00 => {
                    let label = self
                        .buf
                        .get(pos + 1..pos + 1 + len)
                        .ok_or(DnsError::Malformed("label runs past end"))?;
                    labels.push(String::from_utf8_lossy(label).to_ascii_lowercase());
                    pos += 1 + len;
                }
                0xc0 => {
                    let lo = *self.buf.get(pos + 1).ok_or(DnsError::Malformed("truncated pointer"))? as usize;
                    jumps += 1;
                    if jumps > 64 {
                        return Err(DnsError::Malformed("compression loop"));
                    }
                    resume.get_or_insert(pos + 2);
                    pos = ((len & 0x3f) << 8) | lo;
                }
                _ => return Err(DnsError::Malformed("reserved label type")),
            }
        }
        self.pos = resume.unwrap_or(pos);
        Ok(labels.join("."))
    }
}

pub fn decode_message(buf: &[u8]) -> Result<Message, DnsError> {
    let mut c = Cursor { buf, pos: 0 };
    let id = c.u16()?;
    let flags = c.u16()?;
    let qd = c.u16()?;
    let an = c.u16()?;
    c.take(4)?;
    for _ in 0..qd {
        c.name()?;
        c.take(4)?;
    }
    let mut answers = Vec::with_capacity(an as usize);
    for _ in 0..an {
        let name = c.name()?;
        let rtype = c.u16()?;
        c.u16()?;
        let ttl = c.u32()?;
        let rdlen = c.u16()? as usize;
        let start = c.pos;
        let rdata = c.take(rdlen)?;
        let data = match rtype {
            1 if rdlen == 4 => RData::A(Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3])),
            28 if rdlen == 16 => {
                let mut o = [0u8; 16];
                o.copy_from_slice(rdata);
                RData::Aaaa(Ipv6Addr::from(o))
            }
            2 | 5 => {
                let mut inner = Cursor { buf, pos: start };
                let target = inner.name()?;
                if rtype == 2 {
                    RData::Ns(target)
                } else {
                    RData::Cname(target)
                }
            }
            1 | 28 => return Err(DnsError::Malformed("bad address length")),
            t => RData::Other(t),
        };
        answers.push(ResourceRecord { name, ttl, data });
    }
    Ok(Message { id, flags, answers })
}

#[derive(Debug)]
pub struct StubResolver {
    server: SocketAddr,
    timeout: Duration,
    retries: u32,
    next_id: AtomicU16,
}

impl StubResolver {
    pub fn new(server: SocketAddr, timeout: Duration, retries: u32) -> Self {
        let seed = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.subsec_nanos())
            .unwrap_or(0);
        Self {
            server,
            timeout,
            retries,
            next_id: AtomicU16::new(seed as u16),
        }
    }

    pub fn server(&self) -> SocketAddr {
        self.server
    }

    /// Answer records for `name`. Non-zero response codes become errors.
    pub fn query(&self, name: &str, qtype: QueryType) -> Result<Vec<ResourceRecord>, DnsError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let query = encode_query(id, name, qtype)?;
        let mut last = DnsError::Timeout;
        for _ in 0..=self.retries {
            match self.exchange_udp(&query, id) {
                Ok(msg) if msg.truncated() => {
                    let msg = self.exchange_tcp(&query, id)?;
                    return check_rcode(msg);
                }
                Ok(msg) => return check_rcode(msg),
                Err(e @ (DnsError::Timeout | DnsError::Io(_))) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    pub fn addresses(&self, name: &str, qtype: QueryType) -> Result<Vec<IpAddr>, DnsError> {
        let mut v: Vec<IpAddr> = self
            .query(name, qtype)?
            .into_iter()
            .filter_map(|r| match r.data {
                RData::A(a) => Some(IpAddr::V4(a)),
                RData::Aaaa(a) => Some(IpAddr::V6(a)),
                _ => None,
            })
            .collect();
        v.sort();
        v.dedup();
        Ok(v)
    }

    pub fn nameservers(&self, name: &str) -> Result<Vec<String>, DnsError> {
        let mut v: Vec<String> = self
            .query(name, QueryType::Ns)?
            .into_iter()
            .filter_map(|r| match r.data {
                RData::Ns(n) => Some(n),
                _ => None,
            })
            .collect();
        v.sort();
        v.dedup();
        Ok(v)
    }

    fn exchange_udp(&self, query: &[u8], id: u16) -> Result<Message, DnsError> {
        let bind: SocketAddr = if self.server.is_ipv4() {
            (Ipv4Addr::UNSPECIFIED, 0).into()
        } else {
            (Ipv6Addr::UNSPECIFIED, 0).into()
        };
        let sock = UdpSocket::bind(bind)?;
        sock.connect(self.server)?;
        sock.send(query)?;
        let deadline = Instant::now() + self.timeout;
        let mut buf = [0u8; 4096];
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(DnsError::Timeout);
            }
            sock.set_read_timeout(Some(left))?;
            let n = match sock.recv(&mut buf) {
                Ok(n) => n,
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    return Err(DnsError::Timeout)
                }
                Err(e) => return Err(e.into()),
            };
            // Stray or spoofed datagrams are ignored.
            match decode_message(&buf[..n]) {
                Ok(m) if m.id == id && m.flags & FLAG_RESPONSE != 0 => return Ok(m),
                _ => continue,
            }
        }
    }

    fn exchange_tcp(&self, query: &[u8], id: u16) -> Result<Message, DnsError> {
        let timed_out = |e: io::Error| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => DnsError::Timeout,
            _ => DnsError::Io(e),
        };
        let mut s = TcpStream::connect_timeout(&self.server, self.timeout).map_err(timed_out)?;
        s.set_read_timeout(Some(self.timeout))?;
        s.set_write_timeout(Some(self.timeout))?;
        let mut framed = (query.len() as u16).to_be_bytes().to_vec();
        framed.extend_from_slice(query);
        s.write_all(&framed).map_err(timed_out)?;
        let mut len = [0u8; 2];
        s.read_exact(&mut len).map_err(timed_out)?;
        let mut buf = vec![0u8; u16::from_be_bytes(len) as usize];
        s.read_exact(&mut buf).map_err(timed_out)?;
        let m = decode_message(&buf)?;
        if m.id != id {
            return Err(DnsError::Malformed("id mismatch"));
        }
        Ok(m)
    }
}

fn check_rcode(m: Message) -> Result<Vec<ResourceRecord>, DnsError> {
    match m.rcode() {
        0 => Ok(m.answers),
        2 => Err(DnsError::ServFail),
        3 => Err(DnsError::NxDomain),
        5 => Err(DnsError::Refused),
        r => Err(DnsError::Rcode(r)),
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryType::A => "A",
            QueryType::Ns => "NS",
            QueryType::Cname => "CNAME",
            QueryType::Aaaa => "AAAA",
        })
    }
}

/// Builds a response to `query` carrying `answers`. Used by the mock server
/// and by tests.
pub fn encode_response(query: &[u8], rcode: u8, truncated: bool, answers: &[ResourceRecord]) -> Option<Vec<u8>> {
    let mut c = Cursor { buf: query, pos: 12 };
    if query.len() < 12 {
        return None;
    }
    c.name().ok()?;
    c.take(4).ok()?;
    let question_end = c.pos;

    let mut out = query[..2].to_vec();
    let rd = u16::from_be_bytes([query[2], query[3]]) & FLAG_RECURSION_DESIRED;
    let mut flags = FLAG_RESPONSE | rd | 0x0080 | u16::from(rcode & 0x0f);
    if truncated {
        flags |= FLAG_TRUNCATED;
    }
    out.extend_from_slice(&flags.to_be_bytes());
    out.extend_from_slice(&[0, 1]);
    let an = if truncated { 0 } else { answers.len() as u16 };
    out.extend_from_slice(&an.to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]);
    out.extend_from_slice(&query[12..question_end]);
    if truncated {
        return Some(out);
    }
    for rr in answers {
        encode_name(&rr.name, &mut out).ok()?;
        let (rtype, rdata) = match &rr.data {
            RData::A(a) => (1u16, a.octets().to_vec()),
            RData::Aaaa(a) => (28, a.octets().to_vec()),
            RData::Ns(n) | RData::Cname(n) => {
                let mut v = Vec::new();
                encode_name(n, &mut v).ok()?;
                (if matches!(rr.data, RData::Ns(_)) { 2 } else { 5 }, v)
            }
            RData::Other(t) => (*t, Vec::new()),
        };
        out.extend_from_slice(&rtype.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes());
        out.extend_from_slice(&rr.ttl.to_be_bytes());
        out.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        out.extend_from_slice(&rdata);
    }
    Some(out)
}

/// The question name and type of a query.
pub fn decode_question(query: &[u8]) -> Option<(String, u16)> {
    if query.len() < 12 {
        return None;
    }
    let mut c = Cursor { buf: query, pos: 12 };
    let name = c.name().ok()?;
    let qtype = c.u16().ok()?;
    Some((name, qtype))
}
