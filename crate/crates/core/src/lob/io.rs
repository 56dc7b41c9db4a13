//! Event stream serialization: CSV (`ts_ns,kind,side,price_ticks,size,order_ref`)
//! and a fixed 32-byte little-endian binary record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BookEvent, EventKind, Side};
use crate::error::LobError;

pub const RECORD_BYTES: usize = 32;

fn check(index: usize, ev: &BookEvent, prev_ts: i64) -> Result<(), LobError> {
    let bad = |reason: &str| {
        Err(LobError::Malformed {
            index,
            reason: reason.to_string(),
        })
    };
    if ev.size == 0 {
        return bad("size must be positive");
    }
    if ev.price == 0 {
        return bad("price must be positive");
    }
    if ev.ts_ns < prev_ts {
        return bad("timestamps decrease");
    }
    Ok(())
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<BookEvent>, LobError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let mut prev = i64::MIN;
    for (index, row) in rdr.deserialize::<BookEvent>().enumerate() {
        let ev = row.map_err(|e| LobError::Malformed {
            index,
            reason: e.to_string(),
        })?;
        check(index, &ev, prev)?;
        prev = ev.ts_ns;
        out.push(ev);
    }
    Ok(out)
}

pub fn write_events_csv<W: Write>(events: &[BookEvent], writer: W) -> Result<(), LobError> {
    let mut w = csv::Writer::from_writer(writer);
    for ev in events {
        w.serialize(ev)?;
    }
    w.flush()?;
    Ok(())
}

fn encode(ev: &BookEvent) -> [u8; RECORD_BYTES] {
    let mut b = [0u8; RECORD_BYTES];
    b[0..8].copy_from_slice(&ev.ts_ns.to_le_bytes());
    b[8] = match ev.kind {
        EventKind::Add => 0,
        EventKind::Cancel => 1,
        EventKind::Execute => 2,
        EventKind::Trade => 3,
    };
    b[9] = match ev.side {
        Side::Bid => 0,
        Side::Ask => 1,
    };
    b[12..16].copy_from_slice(&ev.price.to_le_bytes());
    b[16..20].copy_from_slice(&ev.size.to_le_bytes());
    b[20..28].copy_from_slice(&ev.order_ref.to_le_bytes());
    b
}

fn decode(index: usize, b: &[u8]) -> Result<BookEvent, LobError> {
    let bad = |reason: String| LobError::Malformed { index, reason };
    let kind = match b[8] {
        0 => EventKind::Add,
        1 => EventKind::Cancel,
        2 => EventKind::Execute,
        3 => EventKind::Trade,
        k => return Err(bad(format!("unknown kind code {k}"))),
    };
    let side = match b[9] {
        0 => Side::Bid,
        1 => Side::Ask,
        s => return Err(bad(format!("unknown side code {s}"))),
    };
    Ok(BookEvent {
        ts_ns: i64::from_le_bytes(b[0..8].try_into().unwrap()),
        kind,
        side,
        price: u32::from_le_bytes(b[12..16].try_into().unwrap()),
        size: u32::from_le_bytes(b[16..20].try_into().unwrap()),
        order_ref: u64::from_le_bytes(b[20..28].try_into().unwrap()),
    })
}

pub fn read_events_binary<R: Read>(mut reader: R) -> Result<Vec<BookEvent>, LobError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.len() % RECORD_BYTES != 0 {
        return Err(LobError::Malformed {
            index: buf.len() / RECORD_BYTES,
            reason: format!(
                "truncated record ({} trailing bytes)",
                buf.len() % RECORD_BYTES
            ),
        });
    }
    let mut out = Vec::with_capacity(buf.len() / RECORD_BYTES);
    let mut prev = i64::MIN;
    for (index, chunk) in buf.chunks_exact(RECORD_BYTES).enumerate() {
        let ev = decode(index, chunk)?;
        check(index, &ev, prev)?;
        prev = ev.ts_ns;
        out.push(ev);
    }
    Ok(out)
}

pub fn write_events_binary<W: Write>(events: &[BookEvent], mut writer: W) -> Result<(), LobError> {
    for ev in events {
        writer.write_all(&encode(ev))?;
    }
    writer.flush()?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a `.csv` file as CSV and anything else as binary records.
pub fn load_events(path: &Path) -> Result<Vec<BookEvent>, LobError> {
    let file = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_events_csv(file)
    } else {
        read_events_binary(file)
    }
}

pub fn save_events(events: &[BookEvent], path: &Path) -> Result<(), LobError> {
    let file = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_events_csv(events, file)
    } else {
        write_events_binary(events, file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<BookEvent> {
        vec![
            BookEvent::new(5, EventKind::Add, Side::Bid, 9999, 100, 1),
            BookEvent::new(6, EventKind::Add, Side::Ask, 10001, 50, 2),
            BookEvent::new(9, EventKind::Execute, Side::Ask, 10001, 20, 2),
            BookEvent::new(9, EventKind::Trade, Side::Ask, 10001, 5, 0),
            BookEvent::new(12, EventKind::Cancel, Side::Bid, 9999, 100, 1),
        ]
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_events_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("ts_ns,kind,side,price_ticks,size,order_ref\n5,add,bid,9999,100,1")
        );
        assert_eq!(read_events_csv(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        write_events_binary(&sample(), &mut buf).unwrap();
        assert_eq!(buf.len(), 5 * RECORD_BYTES);
        assert_eq!(read_events_binary(&buf[..]).unwrap(), sample());
        assert!(read_events_binary(&buf[..40]).is_err());
    }

    #[test]
    fn rejects_malformed_rows() {
        let text = "ts_ns,kind,side,price_ticks,size,order_ref\n5,add,bid,9999,0,1\n";
        assert!(matches!(
            read_events_csv(text.as_bytes()),
            Err(LobError::Malformed { index: 0, .. })
        ));
        let text =
            "ts_ns,kind,side,price_ticks,size,order_ref\n5,add,bid,9999,1,1\n4,add,bid,9998,1,2\n";
        assert!(matches!(
            read_events_csv(text.as_bytes()),
            Err(LobError::Malformed { index: 1, .. })
        ));
        let text = "ts_ns,kind,side,price_ticks,size,order_ref\n5,modify,bid,9999,1,1\n";
        assert!(read_events_csv(text.as_bytes()).is_err());
    }
}
