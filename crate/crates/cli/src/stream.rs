//! Live streaming over TCP: the server broadcasts wire packets to every
//! connected client, the recorder writes whatever arrives to a recording.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::Path;
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use handcal::acquisition::{
    encode_into, Packet, PacketReader, RecordingWriter, ReplaySpeed, DEFAULT_STREAM_COUNT,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::session::{print_json, SCHEMA_VERSION};

/// Bytes buffered before a batch goes out when nothing forces a flush.
const BATCH_BYTES: usize = 64 * 1024;

#[derive(Default)]
struct Clients {
    senders: Vec<Sender<Arc<[u8]>>>,
    writers: Vec<JoinHandle<()>>,
    connected: usize,
    closed: bool,
}

/// Sleeps so packets leave at the pace their timestamps imply. Streams are
/// interleaved and on different clocks, so the pace follows the running maximum.
struct Pacer {
    start: Option<(Instant, u64)>,
    latest_ns: u64,
}

impl Pacer {
    fn new() -> Self {
        Self {
            start: None,
            latest_ns: 0,
        }
    }

    /// How long to wait before sending a packet stamped `t`.
    fn delay(&mut self, t: u64) -> Option<Duration> {
        let wait = match self.start {
            None => {
                self.start = Some((Instant::now(), t));
                None
            }
            Some((start, t0)) if t > self.latest_ns => {
                let due = start + Duration::from_nanos(t - t0);
                due.checked_duration_since(Instant::now())
            }
            Some(_) => None,
        };
        self.latest_ns = self.latest_ns.max(t);
        wait
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: String,
    pub port: u16,
    pub speed: ReplaySpeed,
    /// Hold the stream until this many clients are connected.
    pub wait_clients: usize,
}

#[derive(Serialize)]
struct Announce<'a> {
    schema_version: u32,
    event: &'a str,
    address: String,
}

#[derive(Serialize)]
pub struct ServeSummary {
    pub schema_version: u32,
    pub event: &'static str,
    pub packets: u64,
    pub clients: usize,
}

fn accept_loop(listener: TcpListener, clients: Arc<Mutex<Clients>>) {
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { continue };
        let mut c = clients.lock().expect("client list poisoned");
        if c.closed {
            let _ = stream.shutdown(Shutdown::Both);
            continue;
        }
        let _ = stream.set_nodelay(true);
        let (tx, rx) = channel::<Arc<[u8]>>();
        c.senders.push(tx);
        c.connected += 1;
        c.writers.push(std::thread::spawn(move || {
            for chunk in rx {
                if stream.write_all(&chunk).is_err() {
                    // the client left; its sender is dropped on the next broadcast
                    return;
                }
            }
            let _ = stream.shutdown(Shutdown::Write);
        }));
    }
}

fn broadcast(clients: &Mutex<Clients>, batch: &mut Vec<u8>) {
    if batch.is_empty() {
        return;
    }
    let chunk: Arc<[u8]> = Arc::from(std::mem::take(batch));
    clients
        .lock()
        .expect("client list poisoned")
        .senders
        .retain(|tx| tx.send(chunk.clone()).is_ok());
}

/// Streams `packets` to every client until the source runs dry. Prints an
/// announcement with the bound address first, so `--port 0` is usable.
pub fn serve<I>(packets: I, options: &ServeOptions) -> CliResult<ServeSummary>
where
    I: IntoIterator<Item = CliResult<Packet>>,
{
    let addr = format!("{}:{}", options.bind, options.port);
    let listener = TcpListener::bind(&addr)
        .map_err(|e| CliError::config(format!("cannot bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| CliError::config(format!("{addr}: {e}")))?;
    let clients = Arc::new(Mutex::new(Clients::default()));
    {
        let clients = clients.clone();
        std::thread::spawn(move || accept_loop(listener, clients));
    }
    print_json(&Announce {
        schema_version: SCHEMA_VERSION,
        event: "listening",
        address: local.to_string(),
    })?;

    while clients.lock().expect("client list poisoned").connected < options.wait_clients {
        std::thread::sleep(Duration::from_millis(5));
    }

    let mut pacer = Pacer::new();
    let mut batch = Vec::with_capacity(BATCH_BYTES);
    let mut count = 0u64;
    let mut failure = None;
    for packet in packets {
        let packet = match packet {
            Ok(p) => p,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        if options.speed == ReplaySpeed::Realtime {
            if let Some(wait) = pacer.delay(packet.timestamp_ns()) {
                broadcast(&clients, &mut batch);
                std::thread::sleep(wait);
            }
        }
        encode_into(&packet, &mut batch);
        count += 1;
        if batch.len() >= BATCH_BYTES {
            broadcast(&clients, &mut batch);
        }
    }
    broadcast(&clients, &mut batch);

    let (writers, connected) = {
        let mut c = clients.lock().expect("client list poisoned");
        c.closed = true;
        c.senders.clear();
        (std::mem::take(&mut c.writers), c.connected)
    };
    for w in writers {
        let _ = w.join();
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(ServeSummary {
            schema_version: SCHEMA_VERSION,
            event: "finished",
            packets: count,
            clients: connected,
        }),
    }
}

#[derive(Serialize)]
pub struct RecordSummary {
    pub schema_version: u32,
    pub packets: u64,
    pub bytes: u64,
    /// False when the stream stopped in the middle of a packet.
    pub complete: bool,
}

/// Records a live stream until the server closes it. A stream cut inside a
/// packet keeps every complete packet before the cut.
pub fn record_stream(address: &str, path: &Path) -> CliResult<(RecordSummary, Option<String>)> {
    let stream = TcpStream::connect(address)
        .map_err(|e| CliError::config(format!("cannot connect to {address}: {e}")))?;
    let file =
        File::create(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let io_err = |e: std::io::Error| CliError::data(format!("{}: {e}", path.display()));
    let mut writer =
        RecordingWriter::new(BufWriter::new(file), DEFAULT_STREAM_COUNT).map_err(io_err)?;
    let mut reader = PacketReader::new(BufReader::new(stream), 0);
    let mut problem = None;
    while let Some(item) = reader.next_raw() {
        match item {
            Ok(raw) => writer.write_raw(&raw.bytes).map_err(io_err)?,
            Err(e) => {
                problem = Some(e.to_string());
                break;
            }
        }
    }
    let packets = writer.packets_written();
    writer.finish().map_err(io_err)?.flush().map_err(io_err)?;
    Ok((
        RecordSummary {
            schema_version: SCHEMA_VERSION,
            packets,
            bytes: reader.offset(),
            complete: problem.is_none(),
        },
        problem,
    ))
}
