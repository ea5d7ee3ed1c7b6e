//! CIDR prefixes and a binary trie for longest-prefix matching.

use std::fmt;
use std::io;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use super::{data_lines, read_all, IngestError, LoadOptions, Loaded, RejectReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrefixError {
    #[error("invalid address {0:?}")]
    Address(String),
    #[error("invalid prefix length {0:?}")]
    Length(String),
    #[error("prefix {0} has host bits set")]
    HostBits(String),
}

/// A canonical CIDR prefix (host bits zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    addr: IpAddr,
    len: u8,
}

fn width(addr: &IpAddr) -> u8 {
    match addr {
        IpAddr::V4(_) => 32,
        IpAddr::V6(_) => 128,
    }
}

/// Address bits left-aligned in a u128.
fn bits(addr: &IpAddr) -> u128 {
    match addr {
        IpAddr::V4(a) => (u32::from(*a) as u128) << 96,
        IpAddr::V6(a) => u128::from(*a),
    }
}

fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - len as u32)
    }
}

impl Prefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, PrefixError> {
        if len > width(&addr) {
            return Err(PrefixError::Length(len.to_string()));
        }
        if bits(&addr) & !mask(len) != 0 {
            return Err(PrefixError::HostBits(format!("{addr}/{len}")));
        }
        Ok(Self { addr, len })
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        ip.is_ipv4() == self.addr.is_ipv4() && (bits(&ip) & mask(self.len)) == bits(&self.addr)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, l) = s
            .trim()
            .split_once('/')
            .ok_or_else(|| PrefixError::Length(s.to_string()))?;
        let addr: IpAddr = a.parse().map_err(|_| PrefixError::Address(a.to_string()))?;
        let len: u8 = l.parse().map_err(|_| PrefixError::Length(l.to_string()))?;
        Prefix::new(addr, len)
    }
}

#[derive(Debug, Clone)]
struct Node {
    child: [u32; 2],
    value: Option<u32>,
}

const NIL: u32 = u32::MAX;

/// Binary trie keyed by prefix bits, one root per address family.
#[derive(Debug, Clone)]
pub struct IpTrie<V> {
    nodes: Vec<Node>,
    values: Vec<(Prefix, V)>,
}

impl<V> Default for IpTrie<V> {
    fn default() -> Self {
        let root = Node {
            child: [NIL; 2],
            value: None,
        };
        Self {
            nodes: vec![root.clone(), root],
            values: Vec::new(),
        }
    }
}

impl<V> IpTrie<V> {
    pub fn new() -> Self {
        Self::default()
    }

    fn root(addr: &IpAddr) -> usize {
        usize::from(addr.is_ipv6())
    }

    /// Inserts or replaces the value for `prefix`, returning the old value.
    pub fn insert(&mut self, prefix: Prefix, value: V) -> Option<V> {
        let key = bits(&prefix.addr);
        let mut node = Self::root(&prefix.addr);
        for depth in 0..prefix.len {
            let b = ((key >> (127 - depth as u32)) & 1) as usize;
            if self.nodes[node].child[b] == NIL {
                self.nodes.push(Node {
                    child: [NIL; 2],
                    value: None,
                });
                self.nodes[node].child[b] = (self.nodes.len() - 1) as u32;
            }
            node = self.nodes[node].child[b] as usize;
        }
        match self.nodes[node].value {
            Some(slot) => Some(std::mem::replace(&mut self.values[slot as usize].1, value)),
            None => {
                self.nodes[node].value = Some(self.values.len() as u32);
                self.values.push((prefix, value));
                None
            }
        }
    }

    /// The most specific stored prefix covering `ip`.
    pub fn longest_match(&self, ip: IpAddr) -> Option<(Prefix, &V)> {
        let key = bits(&ip);
        let mut node = Self::root(&ip);
        let mut best = self.nodes[node].value;
        for depth in 0..width(&ip) {
            let b = ((key >> (127 - depth as u32)) & 1) as usize;
            match self.nodes[node].child[b] {
                NIL => break,
                next => node = next as usize,
            }
            if self.nodes[node].value.is_some() {
                best = self.nodes[node].value;
            }
        }
        best.map(|slot| {
            let (p, v) = &self.values[slot as usize];
            (*p, v)
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Prefix, V)> {
        self.values.iter()
    }
}

/// Prefix to origin ASN, loaded from pfx2as lines `prefix length asn`.
#[derive(Debug, Clone, Default)]
pub struct PrefixTable {
    trie: IpTrie<u32>,
    /// Rows whose origin was a multi-origin set like `12_34`; the first ASN is kept.
    pub multi_origin_rows: u64,
}

impl PrefixTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (Prefix, u32)>) -> Self {
        let mut trie = IpTrie::new();
        for (p, asn) in entries {
            trie.insert(p, asn);
        }
        Self {
            trie,
            multi_origin_rows: 0,
        }
    }

    pub fn parse(reader: impl io::Read, opts: &LoadOptions) -> Result<Loaded<Self>, IngestError> {
        let text = read_all(reader)?;
        let mut table = Self::default();
        let mut rejected = RejectReport::default();
        let mut lines = 0;
        for (line, raw) in data_lines(&text) {
            lines += 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let [addr, len, origin] = fields[..] else {
                rejected.push(
                    line,
                    format!("expected `prefix length asn`, found {} fields", fields.len()),
                );
                continue;
            };
            let prefix = match format!("{addr}/{len}").parse::<Prefix>() {
                Ok(p) => p,
                Err(e) => {
                    rejected.push(line, e.to_string());
                    continue;
                }
            };
            let mut origins = origin.split(['_', ',']);
            let first = origins.next().unwrap_or_default();
            let asn = match first.parse::<u32>() {
                Ok(a) => a,
                Err(_) => {
                    rejected.push(line, format!("invalid origin ASN {origin:?}"));
                    continue;
                }
            };
            if origins.next().is_some() {
                table.multi_origin_rows += 1;
            }
            table.trie.insert(prefix, asn);
        }
        opts.finish("pfx2as", table, rejected, lines)
    }

    /// Origin ASN of the longest prefix containing `ip`.
    pub fn lookup_asn(&self, ip: IpAddr) -> Option<u32> {
        self.trie.longest_match(ip).map(|(_, asn)| *asn)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Prefix, u32)> + '_ {
        self.trie.iter().map(|(p, a)| (*p, *a))
    }

    pub fn len(&self) -> usize {
        self.trie.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trie.is_empty()
    }
}

/// Prefixes announced from many locations.
#[derive(Debug, Clone, Default)]
pub struct AnycastSet {
    trie: IpTrie<()>,
}

impl AnycastSet {
    pub fn from_prefixes(prefixes: impl IntoIterator<Item = Prefix>) -> Self {
        let mut trie = IpTrie::new();
        for p in prefixes {
            trie.insert(p, ());
        }
        Self { trie }
    }

    pub fn parse(reader: impl io::Read, opts: &LoadOptions) -> Result<Loaded<Self>, IngestError> {
        let text = read_all(reader)?;
        let mut trie = IpTrie::new();
        let mut rejected = RejectReport::default();
        let mut lines = 0;
        for (line, raw) in data_lines(&text) {
            lines += 1;
            match raw.trim().parse::<Prefix>() {
                Ok(p) => {
                    trie.insert(p, ());
                }
                Err(e) => rejected.push(line, e.to_string()),
            }
        }
        opts.finish("anycast", Self { trie }, rejected, lines)
    }

    pub fn is_anycast(&self, ip: IpAddr) -> bool {
        self.trie.longest_match(ip).is_some()
    }

    pub fn len(&self) -> usize {
        self.trie.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trie.is_empty()
    }
}

impl From<Ipv4Addr> for Prefix {
    fn from(a: Ipv4Addr) -> Self {
        Prefix {
            addr: IpAddr::V4(a),
            len: 32,
        }
    }
}

impl From<Ipv6Addr> for Prefix {
    fn from(a: Ipv6Addr) -> Self {
        Prefix {
            addr: IpAddr::V6(a),
            len: 128,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    #[test]
    fn prefix_parsing() {
        let p: Prefix = "10.0.0.0/8".parse().unwrap();
        assert!(p.contains(ip("10.255.0.1")));
        assert!(!p.contains(ip("11.0.0.1")));
        assert!(!p.contains(ip("::a00:1")));
        assert!(matches!("10.0.0.1/8".parse::<Prefix>(), Err(PrefixError::HostBits(_))));
        assert!(matches!("10.0.0.0/33".parse::<Prefix>(), Err(PrefixError::Length(_))));
        assert!("2001:db8::/32".parse::<Prefix>().is_ok());
        assert!("0.0.0.0/0".parse::<Prefix>().unwrap().contains(ip("8.8.8.8")));
    }

    #[test]
    fn longer_prefix_wins() {
        let t = PrefixTable::from_entries([
            ("10.0.0.0/8".parse().unwrap(), 100),
            ("10.1.0.0/16".parse().unwrap(), 200),
        ]);
        assert_eq!(t.lookup_asn(ip("10.1.2.3")), Some(200));
        assert_eq!(t.lookup_asn(ip("10.2.2.3")), Some(100));
        assert_eq!(t.lookup_asn(ip("192.0.2.1")), None);
    }

    #[test]
    fn families_are_separate() {
        let t = PrefixTable::from_entries([("::/0".parse().unwrap(), 6)]);
        assert_eq!(t.lookup_asn(ip("2001:db8::1")), Some(6));
        assert_eq!(t.lookup_asn(ip("192.0.2.1")), None);
    }

    #[test]
    fn pfx2as_file() {
        let text = "1.0.0.0\t24\t13335\n# comment\n\n8.8.8.0 24 15169_36040\n2001:db8:: 32 64500\n";
        let l = PrefixTable::parse(text.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(l.value.len(), 3);
        assert_eq!(l.value.multi_origin_rows, 1);
        assert_eq!(l.value.lookup_asn(ip("8.8.8.8")), Some(15169));
        assert_eq!(l.value.lookup_asn(ip("2001:db8:1::1")), Some(64500));
    }

    #[test]
    fn corrupt_pfx2as_line_is_numbered() {
        let text = "1.0.0.0 24 13335\n1.0.0.1 24 13335\n";
        match PrefixTable::parse(text.as_bytes(), &LoadOptions::default()) {
            Err(IngestError::TooManyMalformed { report, .. }) => {
                assert_eq!(report.0[0].line, 2);
                assert!(report.0[0].message.contains("host bits"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn anycast_membership() {
        let l = AnycastSet::parse("104.16.0.0/13\n2606:4700::/32\n".as_bytes(), &LoadOptions::default()).unwrap();
        assert!(l.value.is_anycast(ip("104.17.1.1")));
        assert!(l.value.is_anycast(ip("2606:4700::6810:1")));
        assert!(!l.value.is_anycast(ip("1.1.1.1")));
    }
}
