use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::sim::Simulator;
use super::vault::KeyVault;
use super::HarnessError;
use crate::qkdsim::{KmsRequest, KmsResponse};

/// A running key-delivery endpoint. Stops when dropped.
#[derive(Debug)]
pub struct KeyServer {
    addr: SocketAddr,
    node: String,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl KeyServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    /// Blocks until the accept loop ends (it only ends on shutdown).
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for KeyServer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

fn answer(vault: &KeyVault, node: &str, line: &str) -> KmsResponse {
    match serde_json::from_str::<KmsRequest>(line) {
        Ok(req) => vault.handle(node, &req),
        Err(e) => KmsResponse::error("bad_request", e.to_string()),
    }
}

fn serve_connection(vault: KeyVault, node: String, stream: TcpStream) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut out = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = answer(&vault, &node, &line);
        let mut text = serde_json::to_string(&resp).expect("responses serialize");
        text.push('\n');
        out.write_all(text.as_bytes())?;
    }
    Ok(())
}

/// Serves the final keys of `node` over newline-delimited JSON on `addr`:
/// one request object per line, one response object per line.
pub fn serve_keys(sim: &Simulator, node: &str, addr: &str) -> Result<KeyServer, HarnessError> {
    if sim.topology().node(node).is_none() {
        return Err(HarnessError::UnknownNode(node.to_string()));
    }
    let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
        io::ErrorKind::AddrInUse => HarnessError::AddressInUse(addr.to_string()),
        _ => HarnessError::Io(e),
    })?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let vault = sim.vault();
    let node_id = node.to_string();
    let flag = stop.clone();
    let accept = thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let (vault, node) = (vault.clone(), node_id.clone());
                    thread::spawn(move || {
                        let _ = serve_connection(vault, node, stream);
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(_) => break,
            }
        }
    });
    Ok(KeyServer {
        addr: local,
        node: node.to_string(),
        stop,
        accept: Some(accept),
    })
}
