//! Active measurement client.
//!
//! For every domain: A records, NS names and the A records of each
//! nameserver through a stub resolver, then the issuer organization of the
//! leaf certificate presented on port 443 of the first IPv4 address that
//! answers. Remote failures never abort a run; they become empty fields plus
//! a note on the record.

pub mod der;
pub mod dns;
#[cfg(feature = "mock")]
pub mod mock;
pub mod tls;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use webcent_core::ingest::{is_valid_hostname, normalize_hostname, MeasurementRecord};

use dns::{QueryType, StubResolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    /// Every record gets this timestamp; makes output reproducible.
    Fixed(i64),
}

impl Clock {
    fn now(self) -> i64 {
        match self {
            Clock::Fixed(t) => t,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub resolver: SocketAddr,
    pub tls_port: u16,
    /// Per query and per connection.
    pub timeout: Duration,
    pub max_inflight: usize,
    pub retries: u32,
    pub tls: bool,
    /// Also query AAAA records and probe IPv6 addresses.
    pub ipv6: bool,
    /// Upper bound on probes started per second.
    pub rate_limit: Option<f64>,
    pub clock: Clock,
}

impl ProbeConfig {
    pub fn new(resolver: SocketAddr) -> Self {
        Self {
            resolver,
            tls_port: 443,
            timeout: Duration::from_secs(3),
            max_inflight: 64,
            retries: 2,
            tls: true,
            ipv6: false,
            rate_limit: None,
            clock: Clock::System,
        }
    }

    pub fn validate(&self) -> Result<(), CollectError> {
        if self.timeout.is_zero() {
            return Err(CollectError::Config("timeout must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(CollectError::Config("max in-flight probes must be at least 1".into()));
        }
        if let Some(r) = self.rate_limit {
            if !(r.is_finite() && r > 0.0) {
                return Err(CollectError::Config(format!("rate limit {r} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty domain list")]
    NoDomains,
    #[error("writing output failed after {written} records: {source}")]
    Sink { written: usize, source: io::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CollectStats {
    pub domains: usize,
    /// Domains with at least one address.
    pub resolved: usize,
    pub tls_ok: usize,
    /// Domains without any address.
    pub failed: usize,
}

/// Reads a newline-separated domain list, skipping blank lines and `#`
/// comments. Order and duplicates are kept.
pub fn read_domain_list(reader: impl BufRead) -> io::Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(normalize_hostname(t));
        }
    }
    Ok(out)
}

fn note(notes: &mut Vec<String>, field: &str, e: impl std::fmt::Display) {
    notes.push(format!("{field}: {e}"));
}

/// NS names for `domain`, walking up to the parent zone when the name itself
/// has none. Stops before the top-level domain.
fn nameservers(resolver: &StubResolver, domain: &str) -> Result<Vec<String>, dns::DnsError> {
    let mut name = domain;
    loop {
        let ns = resolver.nameservers(name)?;
        if !ns.is_empty() {
            return Ok(ns);
        }
        match name.split_once('.') {
            Some((_, parent)) if parent.contains('.') => name = parent,
            _ => return Ok(ns),
        }
    }
}

/// DNS part of a probe: A records, NS names and their A records.
pub fn resolve_domain(domain: &str, resolver: &StubResolver, config: &ProbeConfig) -> MeasurementRecord {
    let domain = normalize_hostname(domain);
    let mut rec = MeasurementRecord {
        domain: domain.clone(),
        ts: config.clock.now(),
        ..Default::default()
    };
    if !is_valid_hostname(&domain) {
        rec.notes.push("domain: invalid name".into());
        return rec;
    }
    let mut kinds = vec![(QueryType::A, "a")];
    if config.ipv6 {
        kinds.push((QueryType::Aaaa, "aaaa"));
    }
    for (qtype, field) in kinds {
        match resolver.addresses(&domain, qtype) {
            Ok(v) => rec.a.extend(v),
            Err(e) => note(&mut rec.notes, field, e.note()),
        }
    }
    rec.a.sort();
    rec.a.dedup();

    match nameservers(resolver, &domain) {
        Ok(ns) => rec.ns = ns,
        Err(e) => note(&mut rec.notes, "ns", e.note()),
    }
    let mut ns_a = BTreeMap::new();
    for ns in &rec.ns {
        match resolver.addresses(ns, QueryType::A) {
            Ok(v) => {
                ns_a.insert(ns.clone(), v);
            }
            Err(e) => {
                note(&mut rec.notes, &format!("ns_a {ns}"), e.note());
                ns_a.insert(ns.clone(), Vec::new());
            }
        }
    }
    rec.ns_a = ns_a;
    rec
}

/// Tries the record's addresses in order until one presents a certificate.
pub fn fetch_issuer(rec: &mut MeasurementRecord, config: &ProbeConfig) {
    let candidates: Vec<IpAddr> = rec.a.iter().copied().filter(|ip| config.ipv6 || ip.is_ipv4()).collect();
    for ip in candidates {
        match tls::fetch_leaf_issuer(SocketAddr::new(ip, config.tls_port), &rec.domain, config.timeout) {
            Ok(Some(issuer)) => {
                rec.issuer = Some(issuer);
                return;
            }
            Ok(None) => {
                note(&mut rec.notes, &format!("tls {ip}"), "issuer has no organization");
                return;
            }
            Err(e) => note(&mut rec.notes, &format!("tls {ip}"), e),
        }
    }
}

pub fn probe_domain(domain: &str, resolver: &StubResolver, config: &ProbeConfig) -> MeasurementRecord {
    let mut rec = resolve_domain(domain, resolver, config);
    if config.tls {
        fetch_issuer(&mut rec, config);
    }
    rec
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

/// Probes every domain with at most `max_inflight` probes running at once.
/// Records reach `sink` in input order as soon as they and all earlier ones
/// are done. A sink error stops new probes, lets running ones finish, and is
/// returned with the number of records already written.
pub fn collect(
    domains: &[String],
    config: &ProbeConfig,
    mut sink: impl FnMut(&MeasurementRecord) -> io::Result<()>,
) -> Result<CollectStats, CollectError> {
    config.validate()?;
    if domains.is_empty() {
        return Err(CollectError::NoDomains);
    }
    let resolver = StubResolver::new(config.resolver, config.timeout, config.retries);
    let limiter = config.rate_limit.map(|r| RateLimiter {
        interval: Duration::from_secs_f64(1.0 / r),
        next: Mutex::new(Instant::now()),
    });
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = config.max_inflight.min(domains.len());
    let mut stats = CollectStats {
        domains: domains.len(),
        ..Default::default()
    };

    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, MeasurementRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, resolver, limiter) = (&next, &abort, &resolver, &limiter);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(domain) = domains.get(i) else { break };
                if let Some(l) = limiter {
                    l.wait();
                }
                let rec = probe_domain(domain, resolver, config);
                if tx.send((i, rec)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut written = 0;
        for (i, rec) in rx {
            pending.insert(i, rec);
            while let Some(rec) = pending.remove(&written) {
                if let Err(source) = sink(&rec) {
                    abort.store(true, Ordering::SeqCst);
                    return Err(CollectError::Sink { written, source });
                }
                written += 1;
                if rec.a.is_empty() {
                    stats.failed += 1;
                } else {
                    stats.resolved += 1;
                }
                if rec.issuer.is_some() {
                    stats.tls_ok += 1;
                }
            }
        }
        Ok(())
    })?;
    Ok(stats)
}

/// [`collect`] writing JSON lines to `out`.
pub fn collect_jsonl(
    domains: &[String],
    config: &ProbeConfig,
    mut out: impl Write,
) -> Result<CollectStats, CollectError> {
    let stats = collect(domains, config, |rec| {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")
    })?;
    out.flush().map_err(|source| CollectError::Sink {
        written: stats.domains,
        source,
    })?;
    Ok(stats)
}
