//! The wire frame: an 11-byte little-endian header plus payload.
//!
//! Header layout, least-significant byte first:
//!
//! | offset | size | field                                      |
//! |--------|------|--------------------------------------------|
//! | 0      | 4    | payload length (u32)                       |
//! | 4      | 1    | sender party byte                          |
//! | 5      | 1    | receiver party byte                        |
//! | 6      | 1    | phase byte                                 |
//! | 7      | 2    | layer ordinal (u16; 0xFFFF = none)         |
//! | 9      | 2    | message kind (u16)                         |
//!
//! The metered size of a frame is `HEADER_BYTES + payload.len()`.

use super::{PartyId, Phase};
use crate::error::{Error, Result};

/// Size of the fixed frame header in bytes.
pub const HEADER_BYTES: usize = 11;

/// Layer field value for frames that concern no particular layer
/// (key material, input submission, prediction delivery).
pub const LAYER_NONE: u16 = 0xFFFF;

/// Upper bound on a single payload; decoded lengths above this are
/// rejected as corrupt rather than allocated.
pub const MAX_PAYLOAD: usize = 1 << 30;

/// One unit of communication between two parties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Originating party.
    pub sender: PartyId,
    /// Destination party.
    pub receiver: PartyId,
    /// Phase the frame is charged to.
    pub phase: Phase,
    /// Global 1-based layer-block ordinal, or [`LAYER_NONE`].
    pub layer: u16,
    /// Message kind (a protocol-level catalog number).
    pub kind: u16,
    /// Opaque body.
    pub payload: Vec<u8>,
}

impl Frame {
    /// Bytes this frame is metered as.
    pub fn wire_len(&self) -> u64 {
        (HEADER_BYTES + self.payload.len()) as u64
    }

    /// Serialize header + payload into one buffer.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.sender as u8);
        out.push(self.receiver as u8);
        out.push(self.phase as u8);
        out.extend_from_slice(&self.layer.to_le_bytes());
        out.extend_from_slice(&self.kind.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parse a header; returns the frame with an empty payload plus the
    /// payload length the caller still has to read.
    pub fn decode_header(header: &[u8; HEADER_BYTES]) -> Result<(Frame, usize)> {
        let len = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Deserialize(format!(
                "frame payload length {len} exceeds the {MAX_PAYLOAD}-byte cap"
            )));
        }
        let frame = Frame {
            sender: PartyId::try_from(header[4])?,
            receiver: PartyId::try_from(header[5])?,
            phase: Phase::try_from(header[6])?,
            layer: u16::from_le_bytes(header[7..9].try_into().unwrap()),
            kind: u16::from_le_bytes(header[9..11].try_into().unwrap()),
            payload: Vec::new(),
        };
        Ok((frame, len))
    }

    /// Parse one whole frame from a buffer that contains exactly one frame.
    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Deserialize(format!(
                "frame of {} bytes is shorter than the {HEADER_BYTES}-byte header",
                bytes.len()
            )));
        }
        let header: &[u8; HEADER_BYTES] = bytes[..HEADER_BYTES].try_into().unwrap();
        let (mut frame, len) = Frame::decode_header(header)?;
        if bytes.len() - HEADER_BYTES != len {
            return Err(Error::Deserialize(format!(
                "frame header claims {len} payload bytes, buffer holds {}",
                bytes.len() - HEADER_BYTES
            )));
        }
        frame.payload = bytes[HEADER_BYTES..].to_vec();
        Ok(frame)
    }

    /// The transcript record of this frame (header fields, no payload).
    pub fn info(&self, dir: Dir) -> FrameInfo {
        FrameInfo {
            dir,
            sender: self.sender,
            receiver: self.receiver,
            phase: self.phase,
            layer: self.layer,
            kind: self.kind,
            payload_len: self.payload.len() as u32,
        }
    }
}

/// Direction of a frame relative to the party recording it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    /// The recording party sent the frame.
    Out,
    /// The recording party received it.
    In,
}

/// One transcript line: everything a party's log keeps about a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameInfo {
    /// Sent or received, from the recording party's point of view.
    pub dir: Dir,
    /// Originating party.
    pub sender: PartyId,
    /// Destination party.
    pub receiver: PartyId,
    /// Phase byte of the frame.
    pub phase: Phase,
    /// Layer ordinal (or [`LAYER_NONE`]).
    pub layer: u16,
    /// Message kind.
    pub kind: u16,
    /// Payload size in bytes (header not included).
    pub payload_len: u32,
}

impl FrameInfo {
    /// Metered size: header plus payload.
    pub fn wire_len(&self) -> u64 {
        HEADER_BYTES as u64 + self.payload_len as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_encoding() {
        let f = Frame {
            sender: PartyId::ServerA,
            receiver: PartyId::ServerC,
            phase: Phase::Online,
            layer: 7,
            kind: 0x0102,
            payload: vec![0xAA, 0xBB],
        };
        assert_eq!(
            f.encode(),
            vec![0x02, 0x00, 0x00, 0x00, 0x01, 0x03, 0x02, 0x07, 0x00, 0x02, 0x01, 0xAA, 0xBB]
        );
        assert_eq!(f.wire_len(), 13);
    }

    #[test]
    fn roundtrip() {
        let f = Frame {
            sender: PartyId::User,
            receiver: PartyId::ServerA,
            phase: Phase::Output,
            layer: LAYER_NONE,
            kind: 42,
            payload: (0..=255).collect(),
        };
        assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
    }

    #[test]
    fn truncated_and_corrupt_frames_are_rejected() {
        let good = Frame {
            sender: PartyId::ServerB,
            receiver: PartyId::ServerC,
            phase: Phase::Preprocess,
            layer: 3,
            kind: 9,
            payload: vec![1, 2, 3],
        }
        .encode();

        assert!(matches!(
            Frame::decode(&good[..5]),
            Err(Error::Deserialize(_))
        ));
        assert!(matches!(
            Frame::decode(&good[..good.len() - 1]),
            Err(Error::Deserialize(_))
        ));

        let mut bad_party = good.clone();
        bad_party[4] = 9;
        assert!(matches!(
            Frame::decode(&bad_party),
            Err(Error::Deserialize(_))
        ));

        let mut bad_phase = good.clone();
        bad_phase[6] = 7;
        assert!(matches!(
            Frame::decode(&bad_phase),
            Err(Error::Deserialize(_))
        ));

        let mut huge = good;
        huge[0..4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Frame::decode(&huge), Err(Error::Deserialize(_))));
    }
}
