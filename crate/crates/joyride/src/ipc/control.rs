//! The 64-byte control frame protocol spoken over the client↔service control
//! channel. Layout: byte 0 type code, bytes 1–3 reserved zero, bytes 4–7
//! socket id, bytes 8–23 capability token, bytes 24–63 type-specific body.
//! Integers are little-endian; IPv4 addresses ride as their four octets.

use std::net::Ipv4Addr;

use super::capability::TOKEN_LEN;
use super::IpcError;

pub const CONTROL_FRAME_LEN: usize = 64;
pub const BODY_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    Socket = 0x02,
    Bind = 0x03,
    Listen = 0x04,
    Connect = 0x05,
    Accept = 0x06,
    SendNotify = 0x07,
    RecvNotify = 0x08,
    Close = 0x09,
    SetOpt = 0x0A,
    PollCtl = 0x0B,
    Event = 0x0C,
}

impl MsgType {
    pub fn from_code(code: u8) -> Option<MsgType> {
        Some(match code {
            0x01 => MsgType::Hello,
            0x02 => MsgType::Socket,
            0x03 => MsgType::Bind,
            0x04 => MsgType::Listen,
            0x05 => MsgType::Connect,
            0x06 => MsgType::Accept,
            0x07 => MsgType::SendNotify,
            0x08 => MsgType::RecvNotify,
            0x09 => MsgType::Close,
            0x0A => MsgType::SetOpt,
            0x0B => MsgType::PollCtl,
            0x0C => MsgType::Event,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlMessage {
    pub msg_type: MsgType,
    pub socket_id: u32,
    pub token: [u8; TOKEN_LEN],
    pub body: [u8; BODY_LEN],
}

impl ControlMessage {
    pub fn new(msg_type: MsgType, socket_id: u32, token: [u8; TOKEN_LEN]) -> ControlMessage {
        ControlMessage {
            msg_type,
            socket_id,
            token,
            body: [0u8; BODY_LEN],
        }
    }

    pub fn encode(&self) -> [u8; CONTROL_FRAME_LEN] {
        let mut out = [0u8; CONTROL_FRAME_LEN];
        out[0] = self.msg_type as u8;
        out[4..8].copy_from_slice(&self.socket_id.to_le_bytes());
        out[8..24].copy_from_slice(&self.token);
        out[24..64].copy_from_slice(&self.body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<ControlMessage, IpcError> {
        if bytes.len() != CONTROL_FRAME_LEN {
            return Err(IpcError::Protocol("control frame must be 64 bytes"));
        }
        let msg_type =
            MsgType::from_code(bytes[0]).ok_or(IpcError::Protocol("unknown message type"))?;
        if bytes[1..4] != [0, 0, 0] {
            return Err(IpcError::Protocol("reserved bytes must be zero"));
        }
        let mut token = [0u8; TOKEN_LEN];
        token.copy_from_slice(&bytes[8..24]);
        let mut body = [0u8; BODY_LEN];
        body.copy_from_slice(&bytes[24..64]);
        Ok(ControlMessage {
            msg_type,
            socket_id: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            token,
            body,
        })
    }

    // ---- typed body accessors. Each setter returns self for chaining. ----

    pub fn with_addr_port(mut self, addr: Ipv4Addr, port: u16) -> ControlMessage {
        self.body[0..4].copy_from_slice(&addr.octets());
        self.body[4..6].copy_from_slice(&port.to_le_bytes());
        self
    }

    pub fn addr_port(&self) -> (Ipv4Addr, u16) {
        (
            Ipv4Addr::new(self.body[0], self.body[1], self.body[2], self.body[3]),
            u16::from_le_bytes([self.body[4], self.body[5]]),
        )
    }

    pub fn with_u32(mut self, value: u32) -> ControlMessage {
        self.body[0..4].copy_from_slice(&value.to_le_bytes());
        self
    }

    pub fn body_u32(&self) -> u32 {
        u32::from_le_bytes(self.body[0..4].try_into().unwrap())
    }

    /// SETOPT: option id in body[0..4], value in body[4..8].
    pub fn with_opt(mut self, opt: u32, value: u32) -> ControlMessage {
        self.body[0..4].copy_from_slice(&opt.to_le_bytes());
        self.body[4..8].copy_from_slice(&value.to_le_bytes());
        self
    }

    pub fn opt(&self) -> (u32, u32) {
        (
            u32::from_le_bytes(self.body[0..4].try_into().unwrap()),
            u32::from_le_bytes(self.body[4..8].try_into().unwrap()),
        )
    }

    pub fn with_event(mut self, ev: &EventBody) -> ControlMessage {
        ev.encode_into(&mut self.body);
        self
    }

    pub fn event(&self) -> Result<EventBody, IpcError> {
        EventBody::decode(&self.body)
    }
}

/// Socket option ids for SETOPT.
pub mod opt {
    pub const NONBLOCKING: u32 = 1;
    pub const NODELAY: u32 = 2;
}

/// Readiness flag bits carried by `EventBody::Readiness`.
pub mod ready {
    pub const READABLE: u32 = 1;
    pub const WRITABLE: u32 = 2;
    pub const ERROR: u32 = 4;
    pub const HUP: u32 = 8;
}

/// Service→client EVENT payloads, discriminated by body byte 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventBody {
    /// Session established: your client id and the region geometry.
    HelloOk {
        client_id: u32,
        region_size: u64,
        slots: u32,
        ring_capacity: u32,
    },
    /// Socket created; its ring pair lives at `slot`.
    SocketOk { slot: u32 },
    /// Generic success; BIND replies carry the bound port.
    Ok { port: u16 },
    /// Request failed with an errno-style code.
    Err { code: u32 },
    /// CONNECT completed.
    Connected,
    /// A connection was dequeued from the backlog: fresh socket id, token,
    /// ring slot and the peer address.
    Accepted {
        socket_id: u32,
        token: [u8; TOKEN_LEN],
        slot: u32,
        peer_addr: Ipv4Addr,
        peer_port: u16,
    },
    /// Readiness edge for the socket in the frame header.
    Readiness { flags: u32 },
}

impl EventBody {
    fn encode_into(&self, body: &mut [u8; BODY_LEN]) {
        body.fill(0);
        match *self {
            EventBody::HelloOk {
                client_id,
                region_size,
                slots,
                ring_capacity,
            } => {
                body[0] = 1;
                body[1..5].copy_from_slice(&client_id.to_le_bytes());
                body[5..13].copy_from_slice(&region_size.to_le_bytes());
                body[13..17].copy_from_slice(&slots.to_le_bytes());
                body[17..21].copy_from_slice(&ring_capacity.to_le_bytes());
            }
            EventBody::SocketOk { slot } => {
                body[0] = 2;
                body[1..5].copy_from_slice(&slot.to_le_bytes());
            }
            EventBody::Ok { port } => {
                body[0] = 3;
                body[1..3].copy_from_slice(&port.to_le_bytes());
            }
            EventBody::Err { code } => {
                body[0] = 4;
                body[1..5].copy_from_slice(&code.to_le_bytes());
            }
            EventBody::Connected => body[0] = 5,
            EventBody::Accepted {
                socket_id,
                token,
                slot,
                peer_addr,
                peer_port,
            } => {
                body[0] = 6;
                body[1..5].copy_from_slice(&socket_id.to_le_bytes());
                body[5..21].copy_from_slice(&token);
                body[21..25].copy_from_slice(&slot.to_le_bytes());
                body[25..29].copy_from_slice(&peer_addr.octets());
                body[29..31].copy_from_slice(&peer_port.to_le_bytes());
            }
            EventBody::Readiness { flags } => {
                body[0] = 7;
                body[1..5].copy_from_slice(&flags.to_le_bytes());
            }
        }
    }

    fn decode(body: &[u8; BODY_LEN]) -> Result<EventBody, IpcError> {
        Ok(match body[0] {
            1 => EventBody::HelloOk {
                client_id: u32::from_le_bytes(body[1..5].try_into().unwrap()),
                region_size: u64::from_le_bytes(body[5..13].try_into().unwrap()),
                slots: u32::from_le_bytes(body[13..17].try_into().unwrap()),
                ring_capacity: u32::from_le_bytes(body[17..21].try_into().unwrap()),
            },
            2 => EventBody::SocketOk {
                slot: u32::from_le_bytes(body[1..5].try_into().unwrap()),
            },
            3 => EventBody::Ok {
                port: u16::from_le_bytes([body[1], body[2]]),
            },
            4 => EventBody::Err {
                code: u32::from_le_bytes(body[1..5].try_into().unwrap()),
            },
            5 => EventBody::Connected,
            6 => {
                let mut token = [0u8; TOKEN_LEN];
                token.copy_from_slice(&body[5..21]);
                EventBody::Accepted {
                    socket_id: u32::from_le_bytes(body[1..5].try_into().unwrap()),
                    token,
                    slot: u32::from_le_bytes(body[21..25].try_into().unwrap()),
                    peer_addr: Ipv4Addr::new(body[25], body[26], body[27], body[28]),
                    peer_port: u16::from_le_bytes([body[29], body[30]]),
                }
            }
            7 => EventBody::Readiness {
                flags: u32::from_le_bytes(body[1..5].try_into().unwrap()),
            },
            _ => return Err(IpcError::Protocol("unknown event kind")),
        })
    }
}
