//! Live loop: a UDP listener publishes observations into a mailbox and the simulator
//! polls it without blocking.
//!
//! With [`Clock::Wall`] a tick runs every control period of wall time and takes
//! whatever observation is newest. With [`Clock::Stream`] ticks are driven by the
//! observation timestamps: every tick strictly before a newly arrived timestamp is run
//! first, so each observation reaches the same tick it would reach in an offline replay.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::config::Setup;
use crate::retarget::Observation;
use crate::sim::{Metrics, MetricsBuilder, SimError, Simulator, TickRecord};
use crate::stream::{Listener, Mailbox};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:9763";
const POLL: Duration = Duration::from_micros(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    Wall,
    Stream,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub listen: SocketAddr,
    pub clock: Clock,
    /// Stop after this much simulated time.
    pub duration: Option<f64>,
    /// Silence after which a warning is logged, repeated at the same interval.
    pub heartbeat: Duration,
}

impl ServeOptions {
    pub fn new(listen: SocketAddr) -> Self {
        ServeOptions {
            listen,
            clock: Clock::Wall,
            duration: None,
            heartbeat: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeSummary {
    pub metrics: Metrics,
    pub received: u64,
    pub decode_errors: u64,
    pub out_of_order: u64,
    pub overwrites: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("telemetry sink: {0}")]
    Sink(#[from] std::io::Error),
}

/// A bound listener plus its mailbox, split from [`run`] so callers can learn the
/// local address before any data is sent.
pub struct Server {
    listener: Listener,
    mailbox: Arc<Mailbox<Observation>>,
}

impl Server {
    pub fn bind(addr: SocketAddr) -> Result<Server, ServeError> {
        let mailbox = Arc::new(Mailbox::new());
        let listener = Listener::spawn(addr, mailbox.clone()).map_err(|source| ServeError::Bind { addr, source })?;
        Ok(Server { listener, mailbox })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr()
    }

    /// Runs until `stop` is set or the duration elapses, handing every record to `sink`.
    pub fn run(
        self,
        setup: &Setup,
        opts: &ServeOptions,
        stop: &AtomicBool,
        mut sink: impl FnMut(&TickRecord) -> std::io::Result<()>,
    ) -> Result<ServeSummary, ServeError> {
        let mut sim = Simulator::new(setup.model.clone(), setup.correspondence.clone(), setup.sim.clone(), setup.q0.clone(), setup.base0)?;
        let dt = sim.config().dt();
        let max_ticks = opts.duration.map(|d| (d * sim.config().sim.control_rate + 1e-9).floor() as u64);
        let mut ticks = 0u64;
        let mut builder = MetricsBuilder::default();
        let mut tick = |sim: &mut Simulator, obs: Option<&Observation>, ticks: &mut u64| -> Result<(), ServeError> {
            let rec = sim.step(obs);
            builder.push(&rec);
            sink(&rec)?;
            *ticks += 1;
            Ok(())
        };
        let done = |ticks: u64| max_ticks.is_some_and(|m| ticks >= m);

        let start = Instant::now();
        let mut last_rx = Instant::now();
        let mut last_warn = Instant::now();
        let mut pending: Option<Observation> = None;
        while !stop.load(Ordering::Relaxed) && !done(ticks) {
            let fresh = self.mailbox.take();
            if fresh.is_some() {
                last_rx = Instant::now();
            } else if last_rx.elapsed() >= opts.heartbeat && last_warn.elapsed() >= opts.heartbeat {
                log::warn!("no datagrams for {:.0} s, holding the last pose", last_rx.elapsed().as_secs_f64());
                last_warn = Instant::now();
            }
            match opts.clock {
                Clock::Wall => {
                    let due = start + Duration::from_secs_f64(ticks as f64 * dt);
                    let now = Instant::now();
                    if now < due {
                        if let Some(o) = fresh {
                            pending = Some(o);
                        }
                        std::thread::sleep((due - now).min(POLL));
                        continue;
                    }
                    let obs = fresh.or_else(|| pending.take());
                    tick(&mut sim, obs.as_ref(), &mut ticks)?;
                }
                Clock::Stream => {
                    let Some(o) = fresh else {
                        std::thread::sleep(POLL);
                        continue;
                    };
                    while !done(ticks) && sim.time() + 1e-12 < o.timestamp {
                        let deliver = pending.as_ref().is_some_and(|p| p.timestamp <= sim.time() + 1e-12);
                        let obs = if deliver { pending.take() } else { None };
                        tick(&mut sim, obs.as_ref(), &mut ticks)?;
                    }
                    pending = Some(o);
                }
            }
        }
        let (received, decode_errors, out_of_order) = self.listener.stats().snapshot();
        let overwrites = self.mailbox.overwrites();
        self.listener.stop();
        let adm = sim.admittance();
        Ok(ServeSummary {
            metrics: builder.finish(adm.violations(), adm.faults(), sim.config().wbc.collision_threshold),
            received,
            decode_errors,
            out_of_order,
            overwrites,
        })
    }
}

/// Convenience wrapper: bind and run.
pub fn serve(
    setup: &Setup,
    opts: &ServeOptions,
    stop: Arc<AtomicBool>,
    sink: impl FnMut(&TickRecord) -> std::io::Result<()>,
) -> Result<ServeSummary, ServeError> {
    Server::bind(opts.listen)?.run(setup, opts, &stop, sink)
}
