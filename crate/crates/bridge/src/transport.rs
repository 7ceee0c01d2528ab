//! Line-oriented duplex channels over TCP or standard streams.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::thread;
use std::time::Duration;

#[derive(Debug, PartialEq, Eq)]
pub enum Recv {
    Line(String),
    Timeout,
    Closed,
}

/// Reads lines on a background thread so waits can time out.
pub struct LineReader {
    rx: Receiver<io::Result<String>>,
    stash: Option<io::Result<String>>,
}

impl LineReader {
    pub fn spawn(source: impl Read + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(source);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        let trimmed = line.trim_end_matches(['\r', '\n']).to_string();
                        if tx.send(Ok(trimmed)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self { rx, stash: None }
    }

    pub fn recv(&mut self, timeout: Option<Duration>) -> Recv {
        let next = match self.stash.take() {
            Some(item) => Ok(item),
            None => match timeout {
                Some(t) => self.rx.recv_timeout(t),
                None => self.rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
            },
        };
        match next {
            Ok(Ok(line)) => Recv::Line(line),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Recv::Closed,
            Err(RecvTimeoutError::Timeout) => Recv::Timeout,
        }
    }

    /// True when a line has already arrived and is waiting to be read.
    pub fn has_pending(&mut self) -> bool {
        if self.stash.is_some() {
            return true;
        }
        match self.rx.try_recv() {
            Ok(item) => {
                self.stash = Some(item);
                true
            }
            Err(TryRecvError::Empty | TryRecvError::Disconnected) => false,
        }
    }
}

/// A reader thread plus a writer, closable from either side.
pub struct Connection {
    reader: LineReader,
    writer: Box<dyn Write + Send>,
    socket: Option<TcpStream>,
}

impl Connection {
    pub fn tcp(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = LineReader::spawn(stream.try_clone()?);
        let socket = stream.try_clone()?;
        Ok(Self { reader, writer: Box::new(stream), socket: Some(socket) })
    }

    pub fn stdio() -> Self {
        Self::from_parts(io::stdin(), io::stdout())
    }

    pub fn from_parts(source: impl Read + Send + 'static, sink: impl Write + Send + 'static) -> Self {
        Self { reader: LineReader::spawn(source), writer: Box::new(sink), socket: None }
    }

    pub fn send_line(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }

    pub fn recv(&mut self, timeout: Option<Duration>) -> Recv {
        self.reader.recv(timeout)
    }

    pub fn has_pending(&mut self) -> bool {
        self.reader.has_pending()
    }

    /// Closes the socket (both directions); a no-op for standard streams.
    pub fn close(&mut self) {
        let _ = self.writer.flush();
        if let Some(socket) = self.socket.take() {
            let _ = socket.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}
