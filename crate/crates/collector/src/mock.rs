//! Local DNS server for tests. Answers from a fixed zone over UDP and TCP and
//! counts how many queries it is handling at once.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::dns::{decode_question, encode_response, RData, ResourceRecord};

#[derive(Debug, Clone, Default)]
pub struct MockZone {
    pub a: BTreeMap<String, Vec<IpAddr>>,
    pub ns: BTreeMap<String, Vec<String>>,
    pub nxdomain: BTreeSet<String>,
    pub servfail: BTreeSet<String>,
    /// Names whose UDP answers are truncated, forcing a TCP retry.
    pub truncate: BTreeSet<String>,
    /// Names that never get an answer.
    pub silent: BTreeSet<String>,
    /// Time spent on every query before answering.
    pub delay: Duration,
}

impl MockZone {
    pub fn with_a(mut self, name: &str, addrs: &[&str]) -> Self {
        self.a.insert(
            name.into(),
            addrs.iter().map(|a| a.parse().expect("valid address")).collect(),
        );
        self
    }

    pub fn with_ns(mut self, name: &str, servers: &[&str]) -> Self {
        self.ns
            .insert(name.into(), servers.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn with_nxdomain(mut self, name: &str) -> Self {
        self.nxdomain.insert(name.into());
        self
    }

    fn answer(&self, name: &str, qtype: u16) -> Option<(u8, Vec<ResourceRecord>)> {
        if self.silent.contains(name) {
            return None;
        }
        if self.nxdomain.contains(name) {
            return Some((3, Vec::new()));
        }
        if self.servfail.contains(name) {
            return Some((2, Vec::new()));
        }
        let rr = |data| ResourceRecord {
            name: name.to_string(),
            ttl: 300,
            data,
        };
        let answers = match qtype {
            1 | 28 => self
                .a
                .get(name)
                .into_iter()
                .flatten()
                .filter(|ip| ip.is_ipv4() == (qtype == 1))
                .map(|ip| {
                    rr(match ip {
                        IpAddr::V4(v) => RData::A(*v),
                        IpAddr::V6(v) => RData::Aaaa(*v),
                    })
                })
                .collect(),
            2 => self
                .ns
                .get(name)
                .into_iter()
                .flatten()
                .map(|n| rr(RData::Ns(n.clone())))
                .collect(),
            _ => Vec::new(),
        };
        Some((0, answers))
    }
}

#[derive(Debug, Default)]
pub struct MockStats {
    pub queries: AtomicUsize,
    pub tcp_queries: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockStats {
    /// Largest number of queries that were being handled at the same time.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        self.queries.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Running server; stops when dropped.
pub struct MockDns {
    addr: SocketAddr,
    stats: Arc<MockStats>,
    stop: Arc<AtomicBool>,
}

impl MockDns {
    pub fn start(zone: MockZone) -> io::Result<Self> {
        let udp = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
        let addr = udp.local_addr()?;
        let tcp = TcpListener::bind(addr)?;
        udp.set_read_timeout(Some(Duration::from_millis(20)))?;
        tcp.set_nonblocking(true)?;
        let zone = Arc::new(zone);
        let stats = Arc::new(MockStats::default());
        let stop = Arc::new(AtomicBool::new(false));

        {
            let (zone, stats, stop) = (zone.clone(), stats.clone(), stop.clone());
            let udp = Arc::new(udp);
            thread::spawn(move || {
                let mut buf = [0u8; 1500];
                while !stop.load(Ordering::SeqCst) {
                    let Ok((n, peer)) = udp.recv_from(&mut buf) else {
                        continue;
                    };
                    let query = buf[..n].to_vec();
                    let (zone, stats, udp) = (zone.clone(), stats.clone(), udp.clone());
                    thread::spawn(move || {
                        stats.enter();
                        let resp = respond(&zone, &query, true);
                        // Leave before replying: the client may fire its next
                        // query as soon as the answer lands.
                        stats.leave();
                        if let Some(resp) = resp {
                            let _ = udp.send_to(&resp, peer);
                        }
                    });
                }
            });
        }
        {
            let (zone, stats, stop) = (zone, stats.clone(), stop.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match tcp.accept() {
                        Ok((conn, _)) => {
                            let (zone, stats) = (zone.clone(), stats.clone());
                            thread::spawn(move || {
                                let _ = serve_tcp(conn, &zone, &stats);
                            });
                        }
                        Err(_) => thread::sleep(Duration::from_millis(5)),
                    }
                }
            });
        }
        Ok(Self { addr, stats, stop })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &MockStats {
        &self.stats
    }
}

impl Drop for MockDns {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

fn respond(zone: &MockZone, query: &[u8], udp: bool) -> Option<Vec<u8>> {
    let (name, qtype) = decode_question(query)?;
    if !zone.delay.is_zero() {
        thread::sleep(zone.delay);
    }
    let (rcode, answers) = zone.answer(&name, qtype)?;
    let truncate = udp && zone.truncate.contains(&name);
    encode_response(query, rcode, truncate, &answers)
}

fn serve_tcp(mut conn: TcpStream, zone: &MockZone, stats: &MockStats) -> io::Result<()> {
    conn.set_nonblocking(false)?;
    conn.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut len = [0u8; 2];
    conn.read_exact(&mut len)?;
    let mut query = vec![0u8; u16::from_be_bytes(len) as usize];
    conn.read_exact(&mut query)?;
    stats.enter();
    stats.tcp_queries.fetch_add(1, Ordering::SeqCst);
    let resp = respond(zone, &query, false);
    stats.leave();
    if let Some(resp) = resp {
        let mut framed = (resp.len() as u16).to_be_bytes().to_vec();
        framed.extend(resp);
        conn.write_all(&framed)?;
    }
    Ok(())
}
