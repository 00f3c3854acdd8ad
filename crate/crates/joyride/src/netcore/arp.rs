//! ARP for IPv4 over Ethernet.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::ether::MacAddr;
use super::NetError;
use crate::util::{Micros, SECONDS};

pub const ARP_CACHE_TTL: Micros = 60 * SECONDS;
pub const ARP_PACKET_LEN: usize = 28;

const OPER_REQUEST: u16 = 1;
const OPER_REPLY: u16 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArpPacket {
    pub oper: u16,
    pub sender_mac: MacAddr,
    pub sender_ip: Ipv4Addr,
    pub target_mac: MacAddr,
    pub target_ip: Ipv4Addr,
}

impl ArpPacket {
    pub fn request(sender_mac: MacAddr, sender_ip: Ipv4Addr, target_ip: Ipv4Addr) -> Self {
        Self {
            oper: OPER_REQUEST,
            sender_mac,
            sender_ip,
            target_mac: MacAddr([0; 6]),
            target_ip,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ARP_PACKET_LEN);
        out.extend_from_slice(&1u16.to_be_bytes()); // htype: Ethernet
        out.extend_from_slice(&0x0800u16.to_be_bytes()); // ptype: IPv4
        out.push(6);
        out.push(4);
        out.extend_from_slice(&self.oper.to_be_bytes());
        out.extend_from_slice(&self.sender_mac.0);
        out.extend_from_slice(&self.sender_ip.octets());
        out.extend_from_slice(&self.target_mac.0);
        out.extend_from_slice(&self.target_ip.octets());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<ArpPacket, NetError> {
        if bytes.len() < ARP_PACKET_LEN {
            return Err(NetError::Parse("arp: truncated"));
        }
        if u16::from_be_bytes([bytes[0], bytes[1]]) != 1
            || u16::from_be_bytes([bytes[2], bytes[3]]) != 0x0800
            || bytes[4] != 6
            || bytes[5] != 4
        {
            return Err(NetError::Parse("arp: hardware/protocol type"));
        }
        Ok(ArpPacket {
            oper: u16::from_be_bytes([bytes[6], bytes[7]]),
            sender_mac: MacAddr(bytes[8..14].try_into().unwrap()),
            sender_ip: Ipv4Addr::new(bytes[14], bytes[15], bytes[16], bytes[17]),
            target_mac: MacAddr(bytes[18..24].try_into().unwrap()),
            target_ip: Ipv4Addr::new(bytes[24], bytes[25], bytes[26], bytes[27]),
        })
    }
}

/// Entries expire after 60 s.
#[derive(Debug, Default)]
pub struct ArpCache {
    entries: HashMap<Ipv4Addr, (MacAddr, Micros)>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum ArpResolution {
    Resolved(MacAddr),
    /// No mapping; send this broadcast request.
    Query(ArpPacket),
}

impl ArpCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, ip: Ipv4Addr, now: Micros) -> Option<MacAddr> {
        self.entries
            .get(&ip)
            .filter(|(_, at)| now.saturating_sub(*at) < ARP_CACHE_TTL)
            .map(|(mac, _)| *mac)
    }

    pub fn resolve(
        &self,
        ip: Ipv4Addr,
        now: Micros,
        our_mac: MacAddr,
        our_ip: Ipv4Addr,
    ) -> ArpResolution {
        match self.lookup(ip, now) {
            Some(mac) => ArpResolution::Resolved(mac),
            None => ArpResolution::Query(ArpPacket::request(our_mac, our_ip, ip)),
        }
    }

    /// Learns from any valid ARP packet; answers requests for our IP.
    pub fn input(
        &mut self,
        payload: &[u8],
        our_ip: Ipv4Addr,
        our_mac: MacAddr,
        now: Micros,
    ) -> Result<Option<ArpPacket>, NetError> {
        let pkt = ArpPacket::decode(payload)?;
        if !pkt.sender_ip.is_unspecified() {
            self.entries.insert(pkt.sender_ip, (pkt.sender_mac, now));
        }
        if pkt.oper == OPER_REQUEST && pkt.target_ip == our_ip {
            return Ok(Some(ArpPacket {
                oper: OPER_REPLY,
                sender_mac: our_mac,
                sender_ip: our_ip,
                target_mac: pkt.sender_mac,
                target_ip: pkt.sender_ip,
            }));
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OUR_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
    const OUR_MAC: MacAddr = MacAddr([2, 0, 0, 0, 0, 1]);
    const PEER_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
    const PEER_MAC: MacAddr = MacAddr([2, 0, 0, 0, 0, 2]);

    #[test]
    fn request_for_our_ip_gets_reply() {
        let mut cache = ArpCache::new();
        let req = ArpPacket::request(PEER_MAC, PEER_IP, OUR_IP);
        let reply = cache.input(&req.encode(), OUR_IP, OUR_MAC, 0).unwrap().unwrap();
        assert_eq!(reply.oper, OPER_REPLY);
        assert_eq!(reply.sender_mac, OUR_MAC);
        assert_eq!(reply.target_mac, PEER_MAC);
        // And we learned the sender.
        assert_eq!(cache.lookup(PEER_IP, 0), Some(PEER_MAC));
    }

    #[test]
    fn resolve_unknown_then_learn() {
        let mut cache = ArpCache::new();
        let r = cache.resolve(PEER_IP, 0, OUR_MAC, OUR_IP);
        let ArpResolution::Query(q) = r else {
            panic!("expected query");
        };
        assert_eq!(q.target_ip, PEER_IP);
        // Matching reply arrives.
        let reply = ArpPacket {
            oper: OPER_REPLY,
            sender_mac: PEER_MAC,
            sender_ip: PEER_IP,
            target_mac: OUR_MAC,
            target_ip: OUR_IP,
        };
        cache.input(&reply.encode(), OUR_IP, OUR_MAC, 0).unwrap();
        assert_eq!(
            cache.resolve(PEER_IP, 0, OUR_MAC, OUR_IP),
            ArpResolution::Resolved(PEER_MAC)
        );
    }

    #[test]
    fn entries_expire_after_ttl() {
        let mut cache = ArpCache::new();
        let req = ArpPacket::request(PEER_MAC, PEER_IP, OUR_IP);
        cache.input(&req.encode(), OUR_IP, OUR_MAC, 0).unwrap();
        assert!(cache.lookup(PEER_IP, ARP_CACHE_TTL - 1).is_some());
        assert!(cache.lookup(PEER_IP, ARP_CACHE_TTL).is_none());
    }

    #[test]
    fn malformed_rejected() {
        let mut cache = ArpCache::new();
        assert!(cache.input(&[0u8; 10], OUR_IP, OUR_MAC, 0).is_err());
    }

    #[test]
    fn round_trip() {
        let p = ArpPacket::request(OUR_MAC, OUR_IP, PEER_IP);
        assert_eq!(ArpPacket::decode(&p.encode()).unwrap(), p);
    }
}
