//! UDP ingestion: a listener thread decodes datagrams and publishes the newest
//! observation into a single-slot mailbox that the control loop polls without blocking.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::wire::{self, SequenceFilter};
use crate::retarget::Observation;

/// Latest-value handoff with replace semantics.
#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Mutex<Slot<T>>,
}

#[derive(Debug)]
struct Slot<T> {
    value: Option<T>,
    fresh: bool,
    published: u64,
    overwrites: u64,
}

impl<T: Clone> Mailbox<T> {
    pub fn new() -> Self {
        Mailbox {
            slot: Mutex::new(Slot {
                value: None,
                fresh: false,
                published: 0,
                overwrites: 0,
            }),
        }
    }

    pub fn publish(&self, value: T) {
        let mut s = self.slot.lock().expect("mailbox poisoned");
        if s.fresh {
            s.overwrites += 1;
        }
        s.value = Some(value);
        s.fresh = true;
        s.published += 1;
    }

    /// The newest value if it has not been taken yet.
    pub fn take(&self) -> Option<T> {
        let mut s = self.slot.lock().expect("mailbox poisoned");
        if s.fresh {
            s.fresh = false;
            s.value.clone()
        } else {
            None
        }
    }

    /// The newest value whether or not it was taken before.
    pub fn latest(&self) -> Option<T> {
        self.slot.lock().expect("mailbox poisoned").value.clone()
    }

    /// Values replaced before anyone took them.
    pub fn overwrites(&self) -> u64 {
        self.slot.lock().expect("mailbox poisoned").overwrites
    }

    pub fn published(&self) -> u64 {
        self.slot.lock().expect("mailbox poisoned").published
    }
}

impl<T: Clone> Default for Mailbox<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Default)]
pub struct ListenerStats {
    pub received: AtomicU64,
    pub decode_errors: AtomicU64,
    pub out_of_order: AtomicU64,
}

impl ListenerStats {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.received.load(Ordering::Relaxed),
            self.decode_errors.load(Ordering::Relaxed),
            self.out_of_order.load(Ordering::Relaxed),
        )
    }
}

/// Running listener; dropping it stops the thread.
pub struct Listener {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<ListenerStats>,
    handle: Option<JoinHandle<()>>,
}

impl Listener {
    /// Binds `addr` and starts publishing decoded observations into `mailbox`.
    pub fn spawn(addr: impl ToSocketAddrs, mailbox: Arc<Mailbox<Observation>>) -> std::io::Result<Listener> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let local = socket.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(ListenerStats::default());
        let (stop2, stats2) = (stop.clone(), stats.clone());
        let handle = std::thread::Builder::new().name("rtwbc-udp".into()).spawn(move || {
            let mut buf = vec![0u8; 65536];
            let mut seq = SequenceFilter::default();
            while !stop2.load(Ordering::Relaxed) {
                let n = match socket.recv(&mut buf) {
                    Ok(n) => n,
                    Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => continue,
                    Err(e) => {
                        log::warn!("udp receive failed: {e}");
                        continue;
                    }
                };
                stats2.received.fetch_add(1, Ordering::Relaxed);
                match wire::decode(&buf[..n]) {
                    Ok(d) => {
                        if seq.accept(d.sequence) {
                            mailbox.publish(d.observation);
                        } else {
                            stats2.out_of_order.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                    Err(e) => {
                        stats2.decode_errors.fetch_add(1, Ordering::Relaxed);
                        log::warn!("dropping datagram: {e}");
                    }
                }
            }
        })?;
        Ok(Listener {
            addr: local,
            stop,
            stats,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &ListenerStats {
        &self.stats
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Sends observations as datagrams with increasing sequence numbers.
pub struct Sender {
    socket: UdpSocket,
    next: u32,
}

impl Sender {
    pub fn connect(target: impl ToSocketAddrs) -> std::io::Result<Sender> {
        let socket = UdpSocket::bind("0.0.0.0:0")?;
        socket.connect(target)?;
        Ok(Sender { socket, next: 0 })
    }

    pub fn send(&mut self, obs: &Observation) -> std::io::Result<()> {
        let bytes = wire::encode(self.next, obs).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
        self.socket.send(&bytes)?;
        self.next = self.next.wrapping_add(1);
        Ok(())
    }
}
