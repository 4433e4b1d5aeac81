//! Optional newline-delimited JSON packet trace: one record per completed
//! radio transmission. Off by default; the schema is stable so runs can be
//! grepped (e.g. confirming that no alarm field is ever set in a given mode).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::model::{NodeId, Packet, PacketBody, SimTime};

#[derive(Serialize)]
struct TraceRecord {
    t_us: u64,
    sender: u16,
    /// Unicast target; absent for broadcasts.
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<u16>,
    kind: &'static str,
    src: u16,
    dst: u16,
    seq: u32,
    attempt: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    alarm: Option<u16>,
}

pub struct TraceWriter {
    out: Box<dyn Write>,
}

impl TraceWriter {
    pub fn new(out: Box<dyn Write>) -> TraceWriter {
        TraceWriter { out }
    }

    pub fn to_file(path: &Path) -> io::Result<TraceWriter> {
        Ok(TraceWriter::new(Box::new(BufWriter::new(File::create(path)?))))
    }

    pub fn record_tx(
        &mut self,
        now: SimTime,
        sender: NodeId,
        to: Option<NodeId>,
        p: &Packet,
        attempt: u32,
    ) -> io::Result<()> {
        let (kind, alarm) = match &p.body {
            PacketBody::Rreq { .. } => ("rreq", None),
            PacketBody::Rrep { .. } => ("rrep", None),
            PacketBody::Rerr { alarm, .. } => ("rerr", alarm.map(|n| n.0)),
            PacketBody::Data { .. } => ("data", None),
        };
        let rec = TraceRecord {
            t_us: now.0,
            sender: sender.0,
            to: to.map(|n| n.0),
            kind,
            src: p.src.0,
            dst: p.dst.0,
            seq: p.seq,
            attempt,
            alarm,
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SourceRoute;
    use std::cell::RefCell;
    use std::rc::Rc;

    #[derive(Clone, Default)]
    struct Sink(Rc<RefCell<Vec<u8>>>);
    impl Write for Sink {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.0.borrow_mut().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn records_are_one_json_object_per_line() {
        let sink = Sink::default();
        let mut w = TraceWriter::new(Box::new(sink.clone()));
        let data = Packet {
            src: NodeId(1),
            dst: NodeId(3),
            seq: 9,
            body: PacketBody::Data {
                route: SourceRoute::new(vec![NodeId(1), NodeId(2), NodeId(3)]),
                index: 1,
                payload_bytes: 64,
            },
        };
        w.record_tx(SimTime(416), NodeId(1), Some(NodeId(2)), &data, 0).unwrap();
        let rerr = Packet {
            src: NodeId(2),
            dst: NodeId(1),
            seq: 0,
            body: PacketBody::Rerr {
                broken_link: (NodeId(2), NodeId(3)),
                alarm: Some(NodeId(3)),
                path: vec![NodeId(2), NodeId(1)],
                cursor: 0,
            },
        };
        w.record_tx(SimTime(900), NodeId(2), Some(NodeId(1)), &rerr, 0).unwrap();
        w.flush().unwrap();

        let text = String::from_utf8(sink.0.borrow().clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["kind"], "data");
        assert_eq!(first["to"], 2);
        assert!(first.get("alarm").is_none());
        let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["kind"], "rerr");
        assert_eq!(second["alarm"], 3);
    }
}
