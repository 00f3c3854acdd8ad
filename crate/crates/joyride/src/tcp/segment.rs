//! TCP segment wire format: base header plus the MSS option (the only option
//! this stack speaks).

use std::net::Ipv4Addr;

use crate::netcore::checksum::pseudo_checksum;
use crate::netcore::ipv4::IPPROTO_TCP;
use crate::netcore::NetError;

pub const TCP_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub syn: bool,
    pub fin: bool,
    pub rst: bool,
    pub psh: bool,
    pub ack_flag: bool,
    pub window: u16,
    /// MSS option, present on SYN segments only.
    pub mss_option: Option<u16>,
    pub payload: Vec<u8>,
}

impl TcpSegment {
    /// Sequence space consumed: payload plus one for SYN and one for FIN.
    pub fn seq_len(&self) -> u32 {
        self.payload.len() as u32 + u32::from(self.syn) + u32::from(self.fin)
    }

    pub fn encode(&self, src: Ipv4Addr, dst: Ipv4Addr) -> Vec<u8> {
        let opts_len = if self.mss_option.is_some() { 4 } else { 0 };
        let data_off = (TCP_HEADER_LEN + opts_len) / 4;
        let mut out = Vec::with_capacity(TCP_HEADER_LEN + opts_len + self.payload.len());
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.ack.to_be_bytes());
        out.push((data_off as u8) << 4);
        let mut flags = 0u8;
        if self.fin {
            flags |= 0x01;
        }
        if self.syn {
            flags |= 0x02;
        }
        if self.rst {
            flags |= 0x04;
        }
        if self.psh {
            flags |= 0x08;
        }
        if self.ack_flag {
            flags |= 0x10;
        }
        out.push(flags);
        out.extend_from_slice(&self.window.to_be_bytes());
        out.extend_from_slice(&[0, 0]); // checksum placeholder
        out.extend_from_slice(&[0, 0]); // urgent pointer, unused
        if let Some(mss) = self.mss_option {
            out.push(2);
            out.push(4);
            out.extend_from_slice(&mss.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        let ck = pseudo_checksum(src, dst, IPPROTO_TCP, &out);
        out[16..18].copy_from_slice(&ck.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8], src: Ipv4Addr, dst: Ipv4Addr) -> Result<TcpSegment, NetError> {
        if bytes.len() < TCP_HEADER_LEN {
            return Err(NetError::Parse("tcp: truncated header"));
        }
        let data_off = ((bytes[12] >> 4) as usize) * 4;
        if data_off < TCP_HEADER_LEN || data_off > bytes.len() {
            return Err(NetError::Parse("tcp: data offset"));
        }
        let mut check = bytes.to_vec();
        check[16] = 0;
        check[17] = 0;
        let expect = pseudo_checksum(src, dst, IPPROTO_TCP, &check);
        let stored = u16::from_be_bytes([bytes[16], bytes[17]]);
        if expect != stored {
            return Err(NetError::Parse("tcp: checksum"));
        }
        let flags = bytes[13];
        let mut mss_option = None;
        let mut i = TCP_HEADER_LEN;
        while i < data_off {
            match bytes[i] {
                0 => break,       // end of options
                1 => i += 1,      // nop
                kind => {
                    if i + 1 >= data_off {
                        return Err(NetError::Parse("tcp: option truncated"));
                    }
                    let len = bytes[i + 1] as usize;
                    if len < 2 || i + len > data_off {
                        return Err(NetError::Parse("tcp: option length"));
                    }
                    if kind == 2 {
                        if len != 4 {
                            return Err(NetError::Parse("tcp: mss option length"));
                        }
                        mss_option = Some(u16::from_be_bytes([bytes[i + 2], bytes[i + 3]]));
                    }
                    i += len;
                }
            }
        }
        Ok(TcpSegment {
            src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
            dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
            seq: u32::from_be_bytes(bytes[4..8].try_into().unwrap()),
            ack: u32::from_be_bytes(bytes[8..12].try_into().unwrap()),
            fin: flags & 0x01 != 0,
            syn: flags & 0x02 != 0,
            rst: flags & 0x04 != 0,
            psh: flags & 0x08 != 0,
            ack_flag: flags & 0x10 != 0,
            window: u16::from_be_bytes([bytes[14], bytes[15]]),
            mss_option,
            payload: bytes[data_off..].to_vec(),
        })
    }
}
