//! Observation plumbing for the simulation harness: a transport that
//! records every exchange with the center, and an in-memory log sink.

use std::io;
use std::sync::{Arc, Mutex};

use padme_center::client::{BoxFuture, WireRequest, WireResponse};
use padme_center::{ClientError, Transport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub request: WireRequest,
    pub response: Option<WireResponse>,
}

/// Forwards to `inner` and keeps a copy of each request and response.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            log: Arc::default(),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("exchange log").clone()
    }
}

impl Transport for RecordingTransport {
    fn send(&self, request: WireRequest) -> BoxFuture<'_, Result<WireResponse, ClientError>> {
        Box::pin(async move {
            let result = self.inner.send(request.clone()).await;
            self.log.lock().expect("exchange log").push(Exchange {
                request,
                response: result.as_ref().ok().cloned(),
            });
            result
        })
    }
}

/// Shared byte buffer usable as a `tracing_subscriber` writer.
#[derive(Clone, Default)]
pub struct LogBuffer(Arc<Mutex<Vec<u8>>>);

impl LogBuffer {
    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().expect("log buffer")).into_owned()
    }
}

impl io::Write for LogBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().expect("log buffer").extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl<'a> tracing_subscriber::fmt::MakeWriter<'a> for LogBuffer {
    type Writer = LogBuffer;

    fn make_writer(&'a self) -> Self::Writer {
        self.clone()
    }
}
