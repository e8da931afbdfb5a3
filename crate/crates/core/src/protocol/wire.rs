//! Length-prefixed binary framing.
//!
//! ```text
//! offset 0  magic "GRPC"
//!        4  version     u16 LE (= 1)
//!        6  msg_type    u16 LE
//!        8  payload_len u32 LE
//!       12  payload
//! ```
//!
//! Vector payloads are IEEE-754 `f32` little-endian.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"GRPC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
/// Samples per DATASET_CHUNK.
pub const CHUNK_SAMPLES: usize = 256;
/// Upper bound on an accepted payload, to refuse absurd allocations.
pub const MAX_PAYLOAD: usize = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum MsgType {
    Hello = 1,
    DatasetChunk = 2,
    DatasetEnd = 3,
    TrainAck = 4,
    ClassifyReq = 5,
    ClassifyResp = 6,
    Error = 7,
}

impl MsgType {
    pub fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => MsgType::Hello,
            2 => MsgType::DatasetChunk,
            3 => MsgType::DatasetEnd,
            4 => MsgType::TrainAck,
            5 => MsgType::ClassifyReq,
            6 => MsgType::ClassifyResp,
            7 => MsgType::Error,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    NotReady = 1,
    Protocol = 2,
    DimensionMismatch = 3,
    BadLabel = 4,
    PartialData = 5,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => ErrorCode::NotReady,
            2 => ErrorCode::Protocol,
            3 => ErrorCode::DimensionMismatch,
            4 => ErrorCode::BadLabel,
            5 => ErrorCode::PartialData,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.frame_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(msg.msg_type as u16).to_le_bytes());
    out.extend_from_slice(&(msg.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&msg.payload);
    out
}

/// Validated header: message type and payload length.
fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MsgType, usize)> {
    if h[..4] != MAGIC {
        return Err(Error::Framing(format!("bad magic {:?}", &h[..4])));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != VERSION {
        return Err(Error::Framing(format!("unsupported version {version}")));
    }
    let raw = u16::from_le_bytes([h[6], h[7]]);
    let msg_type = MsgType::from_u16(raw)
        .ok_or_else(|| Error::Framing(format!("unknown message type {raw}")))?;
    let len = u32::from_le_bytes([h[8], h[9], h[10], h[11]]) as usize;
    Ok((msg_type, len))
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(WireMessage, usize)> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Framing(format!("{} bytes is shorter than a header", bytes.len())))?;
    let (msg_type, len) = parse_header(header)?;
    let end = HEADER_LEN + len;
    if bytes.len() < end {
        return Err(Error::Framing(format!(
            "payload_len {len} overruns the {} available bytes",
            bytes.len() - HEADER_LEN
        )));
    }
    Ok((
        WireMessage::new(msg_type, bytes[HEADER_LEN..end].to_vec()),
        end,
    ))
}

/// Writes one frame and returns the number of bytes written.
pub fn write_message(w: &mut impl Write, msg: &WireMessage) -> Result<usize> {
    let bytes = encode(msg);
    w.write_all(&bytes)?;
    Ok(bytes.len())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any header byte.
pub fn read_message(r: &mut impl Read) -> Result<Option<(WireMessage, usize)>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Framing("stream ended inside a header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (msg_type, len) = parse_header(&header)?;
    if len > MAX_PAYLOAD {
        return Err(Error::Framing(format!(
            "payload_len {len} exceeds the {MAX_PAYLOAD}-byte limit"
        )));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Framing("stream ended inside a payload".into()),
        _ => e.into(),
    })?;
    Ok(Some((
        WireMessage::new(msg_type, payload),
        HEADER_LEN + len,
    )))
}

// Typed payloads.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub k: u32,
    pub class_count: u16,
    pub sample_count: u32,
}

pub const HELLO_PAYLOAD_LEN: usize = 10;

impl Hello {
    pub fn to_message(&self) -> WireMessage {
        let mut p = Vec::with_capacity(HELLO_PAYLOAD_LEN);
        p.extend_from_slice(&self.k.to_le_bytes());
        p.extend_from_slice(&self.class_count.to_le_bytes());
        p.extend_from_slice(&self.sample_count.to_le_bytes());
        WireMessage::new(MsgType::Hello, p)
    }

    pub fn parse(payload: &[u8]) -> Result<Self> {
        if payload.len() != HELLO_PAYLOAD_LEN {
            return Err(Error::Protocol(format!(
                "HELLO payload is {} bytes, expected 10",
                payload.len()
            )));
        }
        Ok(Self {
            k: u32::from_le_bytes(payload[0..4].try_into().unwrap()),
            class_count: u16::from_le_bytes(payload[4..6].try_into().unwrap()),
            sample_count: u32::from_le_bytes(payload[6..10].try_into().unwrap()),
        })
    }
}

/// Bytes one sample occupies in a DATASET_CHUNK.
pub fn sample_bytes(k: usize) -> usize {
    4 * k + 2
}

pub fn chunk_message(values: &[f32], labels: &[u16], k: usize) -> WireMessage {
    assert_eq!(
        values.len(),
        labels.len() * k,
        "values must hold k per label"
    );
    let mut p = Vec::with_capacity(labels.len() * sample_bytes(k));
    for (x, y) in values.chunks(k.max(1)).zip(labels) {
        for v in x {
            p.extend_from_slice(&v.to_le_bytes());
        }
        p.extend_from_slice(&y.to_le_bytes());
    }
    WireMessage::new(MsgType::DatasetChunk, p)
}

/// Splits a chunk payload into values and labels. The payload must be a
/// whole number of `4k + 2`-byte samples.
pub fn parse_chunk(payload: &[u8], k: usize) -> Result<(Vec<f32>, Vec<u16>)> {
    let stride = sample_bytes(k);
    if k == 0 || !payload.len().is_multiple_of(stride) {
        return Err(Error::ShapeMismatch {
            expected: format!("a multiple of {stride} bytes (k={k})"),
            actual: payload.len().to_string(),
        });
    }
    let n = payload.len() / stride;
    let mut values = Vec::with_capacity(n * k);
    let mut labels = Vec::with_capacity(n);
    for s in payload.chunks_exact(stride) {
        values.extend(
            s[..4 * k]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
        labels.push(u16::from_le_bytes([s[4 * k], s[4 * k + 1]]));
    }
    Ok((values, labels))
}

pub fn end_message() -> WireMessage {
    WireMessage::new(MsgType::DatasetEnd, Vec::new())
}

pub fn train_ack_message(total_samples: u32) -> WireMessage {
    WireMessage::new(MsgType::TrainAck, total_samples.to_le_bytes().to_vec())
}

pub fn parse_train_ack(payload: &[u8]) -> Result<u32> {
    let b: [u8; 4] = payload.try_into().map_err(|_| {
        Error::Protocol(format!(
            "TRAIN_ACK payload is {} bytes, expected 4",
            payload.len()
        ))
    })?;
    Ok(u32::from_le_bytes(b))
}

pub fn f32s_to_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn bytes_to_f32s(b: &[u8]) -> Result<Vec<f32>> {
    if !b.len().is_multiple_of(4) {
        return Err(Error::Protocol(format!(
            "{} bytes is not a whole number of f32 values",
            b.len()
        )));
    }
    Ok(b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn classify_request(x: &[f32]) -> WireMessage {
    WireMessage::new(MsgType::ClassifyReq, f32s_to_bytes(x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyResponse {
    pub class: u16,
    pub probabilities: Vec<f32>,
}

impl ClassifyResponse {
    pub fn to_message(&self) -> WireMessage {
        let mut p = self.class.to_le_bytes().to_vec();
        p.extend(f32s_to_bytes(&self.probabilities));
        WireMessage::new(MsgType::ClassifyResp, p)
    }

    pub fn parse(payload: &[u8]) -> Result<Self> {
        if payload.len() < 2 {
            return Err(Error::Protocol("CLASSIFY_RESP payload too short".into()));
        }
        Ok(Self {
            class: u16::from_le_bytes([payload[0], payload[1]]),
            probabilities: bytes_to_f32s(&payload[2..])?,
        })
    }
}

pub fn error_message(code: ErrorCode, text: &str) -> WireMessage {
    let mut p = (code as u16).to_le_bytes().to_vec();
    p.extend_from_slice(text.as_bytes());
    WireMessage::new(MsgType::Error, p)
}

/// `(code, text)` of an ERROR frame. Unknown codes are passed through.
pub fn parse_error(payload: &[u8]) -> Result<(u16, String)> {
    if payload.len() < 2 {
        return Err(Error::Protocol("ERROR payload too short".into()));
    }
    Ok((
        u16::from_le_bytes([payload[0], payload[1]]),
        String::from_utf8_lossy(&payload[2..]).into_owned(),
    ))
}

/// Exact bytes a participant sends in the dataset phase: HELLO, the chunks
/// and DATASET_END.
pub fn dataset_phase_bytes(samples: usize, k: usize) -> usize {
    let chunks = samples.div_ceil(CHUNK_SAMPLES);
    samples * sample_bytes(k) + HEADER_LEN * (2 + chunks) + HELLO_PAYLOAD_LEN
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_payload_is_a_12_byte_frame() {
        let msg = WireMessage::new(MsgType::Hello, Vec::new());
        let bytes = encode(&msg);
        assert_eq!(bytes.len(), 12);
        assert_eq!(decode(&bytes).unwrap(), (msg, 12));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&WireMessage::new(MsgType::ClassifyResp, vec![9; 5]));
        assert_eq!(&bytes[..4], b"GRPC");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[6, 0]);
        assert_eq!(&bytes[8..12], &[5, 0, 0, 0]);
    }

    #[test]
    fn framing_errors() {
        let mut bytes = encode(&end_message());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Framing(_))));
        let mut bytes = encode(&end_message());
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(Error::Framing(_))));
        let bytes = encode(&WireMessage::new(MsgType::ClassifyReq, vec![0; 8]));
        assert!(matches!(decode(&bytes[..15]), Err(Error::Framing(_))));
        let mut bytes = encode(&end_message());
        bytes[6] = 99;
        assert!(matches!(decode(&bytes), Err(Error::Framing(_))));
    }

    #[test]
    fn chunk_with_three_samples() {
        let values = [0.5f32, -1.0, 2.0, 3.5, 1e-3, -7.25];
        let labels = [3u16, 0, 9];
        let msg = chunk_message(&values, &labels, 2);
        assert_eq!(msg.payload.len(), 3 * 10);
        let (back, used) = decode(&encode(&msg)).unwrap();
        assert_eq!(used, 12 + 30);
        assert_eq!(back, msg);
        assert_eq!(
            parse_chunk(&back.payload, 2).unwrap(),
            (values.to_vec(), labels.to_vec())
        );
        assert!(parse_chunk(&back.payload, 3).is_err());
    }

    #[test]
    fn dataset_phase_accounting() {
        // 4285 samples at k=784: 17 chunks
        let n = 4285;
        assert_eq!(n * sample_bytes(784), 13_446_330);
        assert_eq!(dataset_phase_bytes(n, 784), 13_446_330 + 12 * 19 + 10);
    }

    #[test]
    fn stream_read_write() {
        let mut buf = Vec::new();
        let a = Hello {
            k: 7,
            class_count: 10,
            sample_count: 3,
        }
        .to_message();
        let b = train_ack_message(42);
        let na = write_message(&mut buf, &a).unwrap();
        let nb = write_message(&mut buf, &b).unwrap();
        let mut r = std::io::Cursor::new(buf);
        assert_eq!(read_message(&mut r).unwrap().unwrap(), (a.clone(), na));
        assert_eq!(read_message(&mut r).unwrap().unwrap(), (b, nb));
        assert!(read_message(&mut r).unwrap().is_none());
        assert_eq!(Hello::parse(&a.payload).unwrap().k, 7);
    }
}
