//! Both parties in one process, on two threads over a loopback TCP stream.

use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use crate::data::TokenizedView;
use crate::error::Error;
use crate::model::Party;
use crate::protocol::{Session, WireRecord};
use crate::runtime::config::TrainConfig;
use crate::runtime::party_a::{run_party_a, Init, PartyAOutcome};
use crate::runtime::party_b::{run_party_b, PartyBOutcome};

pub struct LoopbackRun {
    pub a: Result<PartyAOutcome, Error>,
    pub b: Result<PartyBOutcome, Error>,
    /// Every frame as seen by party A, in order.
    pub wire: Vec<WireRecord>,
}

/// Connected stream pair with the configured read timeout.
pub fn stream_pair(timeout_secs: u64) -> std::io::Result<(TcpStream, TcpStream)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let b = TcpStream::connect(listener.local_addr()?)?;
    let (a, _) = listener.accept()?;
    for s in [&a, &b] {
        s.set_nodelay(true)?;
        if timeout_secs > 0 {
            s.set_read_timeout(Some(Duration::from_secs(timeout_secs)))?;
        }
    }
    Ok((a, b))
}

pub fn run_loopback(
    cfg_a: &TrainConfig,
    cfg_b: &TrainConfig,
    titles: &TokenizedView,
    contents: &TokenizedView,
    init_a: &Init,
    init_b: &Init,
) -> Result<LoopbackRun, Error> {
    let (sa, sb) = stream_pair(cfg_a.timeout_secs)?;
    thread::scope(|scope| {
        let hb = scope.spawn(move || {
            let mut session = Session::new(sb, Party::B);
            run_party_b(cfg_b, contents, &mut session, init_b)
        });
        let mut session = Session::new(sa, Party::A).recording();
        let a = run_party_a(cfg_a, titles, &mut session, init_a);
        let wire = session.take_transcript();
        drop(session);
        let b = hb
            .join()
            .map_err(|_| Error::Config("party B thread panicked".into()))?;
        Ok(LoopbackRun { a, b, wire })
    })
}
