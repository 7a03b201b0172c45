//! Wire frames.
//!
//! ```text
//! +----------------+------+-------------+-------------+-----------+
//! | payload len u32| kind | topic len   | topic bytes | payload   |
//! | big endian     | u8   | u16 BE      | UTF-8       |           |
//! +----------------+------+-------------+-------------+-----------+
//! ```
//!
//! Every Subscribe and Publish a client sends is answered by exactly one Ack
//! or Error, in request order, so a frame's id is its position in the
//! connection's request stream and never travels on the wire.

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 7;
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Subscribe = 1,
    Publish = 2,
    Deliver = 3,
    Ack = 4,
    Error = 5,
}

impl TryFrom<u8> for FrameKind {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => FrameKind::Subscribe,
            2 => FrameKind::Publish,
            3 => FrameKind::Deliver,
            4 => FrameKind::Ack,
            5 => FrameKind::Error,
            other => return Err(Error::Protocol(format!("unknown frame kind {other}"))),
        })
    }
}

/// Nonempty, `/`-separated, no empty segments and no wildcard characters.
pub fn validate_topic(topic: &str) -> Result<()> {
    let ok = !topic.is_empty()
        && topic.len() <= u16::MAX as usize
        && topic.split('/').all(|seg| !seg.is_empty())
        && !topic.contains(['*', '#', '+'])
        && !topic.chars().any(char::is_control);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidTopic(topic.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub topic: String,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn subscribe(topic: impl Into<String>) -> Self {
        Self { kind: FrameKind::Subscribe, topic: topic.into(), payload: Vec::new() }
    }

    pub fn publish(topic: impl Into<String>, payload: Vec<u8>) -> Self {
        Self { kind: FrameKind::Publish, topic: topic.into(), payload }
    }

    pub fn deliver(topic: impl Into<String>, payload: Vec<u8>) -> Self {
        Self { kind: FrameKind::Deliver, topic: topic.into(), payload }
    }

    pub fn ack(topic: impl Into<String>) -> Self {
        Self { kind: FrameKind::Ack, topic: topic.into(), payload: Vec::new() }
    }

    pub fn error(topic: impl Into<String>, message: &str) -> Self {
        Self { kind: FrameKind::Error, topic: topic.into(), payload: message.as_bytes().to_vec() }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.topic.len() + self.payload.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<()> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(Error::Protocol(format!("payload of {} bytes exceeds limit", self.payload.len())));
        }
        let topic_len = u16::try_from(self.topic.len())
            .map_err(|_| Error::InvalidTopic(self.topic.clone()))?;
        out.reserve(self.encoded_len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&topic_len.to_be_bytes());
        out.extend_from_slice(self.topic.as_bytes());
        out.extend_from_slice(&self.payload);
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    /// Decodes one frame from the front of `buf`. `Ok(None)` means more
    /// bytes are needed; otherwise returns the frame and bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<Option<(Frame, usize)>> {
        if buf.len() < HEADER_LEN {
            return Ok(None);
        }
        let payload_len = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
        if payload_len > MAX_PAYLOAD {
            return Err(Error::Protocol(format!("payload of {payload_len} bytes exceeds limit")));
        }
        let kind = FrameKind::try_from(buf[4])?;
        let topic_len = u16::from_be_bytes([buf[5], buf[6]]) as usize;
        let total = HEADER_LEN + topic_len + payload_len;
        if buf.len() < total {
            return Ok(None);
        }
        let topic = std::str::from_utf8(&buf[HEADER_LEN..HEADER_LEN + topic_len])
            .map_err(|_| Error::Protocol("topic is not UTF-8".into()))?
            .to_string();
        let payload = buf[HEADER_LEN + topic_len..total].to_vec();
        Ok(Some((Frame { kind, topic, payload }, total)))
    }
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any header byte.
pub async fn read_frame<R: AsyncRead + Unpin>(reader: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    match reader.read(&mut header[..1]).await? {
        0 => return Ok(None),
        _ => reader.read_exact(&mut header[1..]).await?,
    };
    let payload_len = u32::from_be_bytes(header[0..4].try_into().unwrap()) as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("payload of {payload_len} bytes exceeds limit")));
    }
    let kind = FrameKind::try_from(header[4])?;
    let topic_len = u16::from_be_bytes([header[5], header[6]]) as usize;
    let mut body = vec![0u8; topic_len + payload_len];
    reader.read_exact(&mut body).await?;
    let payload = body.split_off(topic_len);
    let topic = String::from_utf8(body).map_err(|_| Error::Protocol("topic is not UTF-8".into()))?;
    Ok(Some(Frame { kind, topic, payload }))
}

pub async fn write_frame<W: AsyncWrite + Unpin>(writer: &mut W, frame: &Frame) -> Result<()> {
    let bytes = frame.encode()?;
    writer.write_all(&bytes).await?;
    writer.flush().await?;
    Ok(())
}
