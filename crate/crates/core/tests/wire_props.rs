mod oracles;

use mpsdn_core::wire::{
    compute_hmac, compute_token, decode_option, encode_option, find_mptcp_option, truncate_hmac, Endpoint,
    FourTuple, Role, SetupPacket,
};
use mpsdn_core::{Address, MptcpOption, WireError};
use proptest::prelude::*;

fn any_option() -> impl Strategy<Value = MptcpOption> {
    prop_oneof![
        any::<u64>().prop_map(|key| MptcpOption::MpCapable { key }),
        (any::<u64>(), any::<u64>()).prop_map(|(sender_key, receiver_key)| MptcpOption::MpCapableAck {
            sender_key,
            receiver_key
        }),
        (any::<u32>(), any::<u32>()).prop_map(|(token, nonce)| MptcpOption::MpJoinSyn { token, nonce }),
        (any::<u64>(), any::<u32>()).prop_map(|(hmac, nonce)| MptcpOption::MpJoinSynAck { hmac, nonce }),
        any::<[u8; 20]>().prop_map(|hmac| MptcpOption::MpJoinAck { hmac }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn codec_round_trip(opt in any_option(), trailing in proptest::collection::vec(any::<u8>(), 0..8)) {
        let mut bytes = encode_option(&opt);
        prop_assert_eq!(bytes.len(), opt.encoded_len());
        prop_assert_eq!(bytes[0], 30);
        prop_assert_eq!(bytes[1] as usize, bytes.len());
        bytes.extend_from_slice(&trailing);
        prop_assert_eq!(decode_option(&bytes), Ok(opt));
    }
}

proptest! {
    #[test]
    fn truncation_is_an_error(opt in any_option(), cut in 0usize..24) {
        let bytes = encode_option(&opt);
        prop_assume!(cut < bytes.len());
        prop_assert!(decode_option(&bytes[..cut]).is_err());
    }

    #[test]
    fn option_found_after_padding(opt in any_option(), nops in 0usize..6) {
        let mut list = vec![1u8; nops];
        list.extend_from_slice(&[2, 4, 0x05, 0xb4]);
        list.extend_from_slice(&encode_option(&opt));
        list.push(0);
        prop_assert_eq!(find_mptcp_option(&list), Ok(opt));
    }

    #[test]
    fn wrong_kind_rejected(opt in any_option(), kind in 0u8..=255) {
        prop_assume!(kind != 30);
        let mut bytes = encode_option(&opt);
        bytes[0] = kind;
        prop_assert_eq!(decode_option(&bytes), Err(WireError::WrongKind(kind)));
    }

    #[test]
    fn handshakes_establish(ka in any::<u64>(), kb in any::<u64>(), s1 in any::<u64>(), s2 in any::<u64>(), joins in 0u16..5) {
        let tuple = |port| FourTuple { src_addr: Address(1), dst_addr: Address(2), src_port: port, dst_port: 5001 };
        let mut a = Endpoint::new(Role::Initiator, ka, s1);
        let mut b = Endpoint::new(Role::Responder, kb, s2);
        let deliver = |first: SetupPacket, a: &mut Endpoint, b: &mut Endpoint| {
            let mut p = Some(first);
            let mut to_b = true;
            while let Some(x) = p {
                p = if to_b { b.step(&x) } else { a.step(&x) }.unwrap();
                to_b = !to_b;
            }
        };
        let syn = a.open_initial(tuple(1));
        deliver(syn, &mut a, &mut b);
        for j in 0..joins {
            let syn = a.open_join(tuple(2 + j)).unwrap();
            deliver(syn, &mut a, &mut b);
            prop_assert!(a.is_established(&tuple(2 + j)));
            prop_assert!(b.is_established(&tuple(2 + j).reversed()));
        }
        prop_assert_eq!(a.token(), Some(compute_token(ka)));
        prop_assert_eq!(b.token(), Some(compute_token(ka)));
    }
}

#[test]
fn token_and_hmac_match_reference_digests() {
    let cases = oracles::crypto_cases(oracles::CRYPTO_FIXTURE);
    assert_eq!(cases.len(), 100);
    for c in &cases {
        assert_eq!(compute_token(c.key_a), c.token);
        let mac = compute_hmac(c.key_a, c.key_b, c.nonce_a, c.nonce_b);
        assert_eq!(mac, c.hmac);
        assert_eq!(truncate_hmac(&mac), u64::from_be_bytes(c.hmac[..8].try_into().unwrap()));
        if c.key_a != c.key_b {
            assert_ne!(compute_hmac(c.key_b, c.key_a, c.nonce_a, c.nonce_b), c.hmac);
        }
    }
}

#[test]
fn setup_packet_classification() {
    let t = FourTuple { src_addr: Address(1), dst_addr: Address(2), src_port: 1, dst_port: 2 };
    let syn = SetupPacket::new(t, true, false, &MptcpOption::MpJoinSyn { token: 1, nonce: 2 });
    assert!(syn.is_subflow_setup());
    let synack = SetupPacket::new(t, true, true, &MptcpOption::MpCapable { key: 1 });
    assert!(!synack.is_subflow_setup());
    let plain = SetupPacket { options: vec![1, 1, 0], ..syn };
    assert!(!plain.is_subflow_setup());
}
