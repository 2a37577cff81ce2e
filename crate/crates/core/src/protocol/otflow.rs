//! Oblivious transfer over the frame transport.
//!
//! One batch = one (sender, receiver, block) tuple: the sender contributes
//! a fresh curve scalar per batch (the security anchor — transfer indices
//! only separate hash domains *within* a batch), the receiver answers with
//! one point per choice bit, and the sender returns both labels of every
//! pair masked under the derived keys. The receiver can unmask exactly the
//! chosen one.
//!
//! With the `insecure-test-modes` feature and the dealer switch on, both
//! ends instead derive identical key pairs from a shared seed stream and
//! only the masked-pair frame crosses the wire.

#[cfg(feature = "insecure-test-modes")]
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::gc::{OtReceiver, OtSender};
use crate::protocol::messages::{
    mask_pairs, pairs_from_bytes, pairs_to_bytes, points_from_bytes, points_to_bytes,
    unmask_pairs, ONLINE_OT_PAIRS, ONLINE_OT_POINTS, ONLINE_OT_PUBLIC, OT_PAIRS, OT_POINTS,
    OT_PUBLIC, REMOTE_OT_PAIRS, REMOTE_OT_POINTS, REMOTE_OT_PUBLIC,
};
use crate::protocol::rng::{stream_aux, Purpose};
use crate::protocol::RunConfig;
use crate::transport::{Endpoint, PartyId, Phase};

/// The three frame kinds one OT batch uses.
pub(crate) struct OtKinds {
    pub public_point: u16,
    pub points: u16,
    pub pairs: u16,
}

/// Gateway preprocessing batches (A → user).
pub(crate) const GATEWAY_OT: OtKinds = OtKinds {
    public_point: OT_PUBLIC,
    points: OT_POINTS,
    pairs: OT_PAIRS,
};

/// Remote preprocessing batches (B → A or B → C).
pub(crate) const REMOTE_OT: OtKinds = OtKinds {
    public_point: REMOTE_OT_PUBLIC,
    points: REMOTE_OT_POINTS,
    pairs: REMOTE_OT_PAIRS,
};

/// Online batches (B → C).
pub(crate) const ONLINE_OT: OtKinds = OtKinds {
    public_point: ONLINE_OT_PUBLIC,
    points: ONLINE_OT_POINTS,
    pairs: ONLINE_OT_PAIRS,
};

/// Stream discriminator separating concurrent batches at one block: the
/// batch's kind set plus the opposite end's wire id.
fn batch_aux(kinds: &OtKinds, other_end: PartyId) -> u16 {
    kinds.public_point | ((other_end.idx() as u16) << 8)
}

#[cfg(feature = "insecure-test-modes")]
fn dealer_stream(
    cfg: &RunConfig,
    sender: PartyId,
    receiver: PartyId,
    kinds: &OtKinds,
    layer: u16,
    inference: u32,
) -> ChaCha20Rng {
    let aux = batch_aux(kinds, receiver);
    stream_aux(cfg.seed, sender, Purpose::DealerOt, layer, inference, aux)
}

/// Sender side of one batch: transfer `labels[i]` under the receiver's
/// i-th choice bit.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ot_send(
    ep: &mut Endpoint,
    cfg: &RunConfig,
    to: PartyId,
    phase: Phase,
    layer: u16,
    kinds: &OtKinds,
    labels: &[(u128, u128)],
    inference: u32,
) -> Result<()> {
    #[cfg(feature = "insecure-test-modes")]
    if cfg.dealer_ot() {
        let mut shared = dealer_stream(cfg, ep.party(), to, kinds, layer, inference);
        let dealer = crate::gc::ot::DealerOt::deal(labels.len(), &mut shared);
        let masked = mask_pairs(dealer.sender_keys(), labels);
        return ep.send(to, phase, layer, kinds.pairs, pairs_to_bytes(&masked));
    }
    let mut rng = stream_aux(
        cfg.seed,
        ep.party(),
        Purpose::OtSender,
        layer,
        inference,
        batch_aux(kinds, to),
    );
    let sender = OtSender::new(&mut rng);
    ep.send(
        to,
        phase,
        layer,
        kinds.public_point,
        sender.public().to_vec(),
    )?;
    let frame = ep.expect(to, phase, kinds.points)?;
    let points = points_from_bytes(&frame.payload)?;
    if points.len() != labels.len() {
        return Err(Error::Protocol(format!(
            "OT batch for layer {layer}: sent {} pairs, receiver answered {} points",
            labels.len(),
            points.len()
        )));
    }
    let keys = sender.derive_keys(&points, 0)?;
    let masked = mask_pairs(&keys, labels);
    ep.send(to, phase, layer, kinds.pairs, pairs_to_bytes(&masked))
}

/// Receiver side of one batch: learn the label selected by each choice
/// bit and nothing about the other.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ot_recv(
    ep: &mut Endpoint,
    cfg: &RunConfig,
    from: PartyId,
    phase: Phase,
    layer: u16,
    kinds: &OtKinds,
    choices: &[bool],
    inference: u32,
) -> Result<Vec<u128>> {
    #[cfg(feature = "insecure-test-modes")]
    if cfg.dealer_ot() {
        let mut shared = dealer_stream(cfg, from, ep.party(), kinds, layer, inference);
        let dealer = crate::gc::ot::DealerOt::deal(choices.len(), &mut shared);
        let keys = dealer.receiver_keys(choices);
        let frame = ep.expect(from, phase, kinds.pairs)?;
        let pairs = pairs_from_bytes(&frame.payload)?;
        if pairs.len() != choices.len() {
            return Err(Error::Protocol(format!(
                "OT batch for layer {layer}: {} choices but {} pairs",
                choices.len(),
                pairs.len()
            )));
        }
        return Ok(unmask_pairs(&keys, choices, &pairs));
    }
    let mut rng = stream_aux(
        cfg.seed,
        ep.party(),
        Purpose::OtReceiver,
        layer,
        inference,
        batch_aux(kinds, from),
    );
    let frame = ep.expect(from, phase, kinds.public_point)?;
    let public: [u8; 32] = frame.payload.as_slice().try_into().map_err(|_| {
        Error::Protocol(format!(
            "OT public point must be 32 bytes, got {}",
            frame.payload.len()
        ))
    })?;
    let (receiver, points) = OtReceiver::respond(&public, choices, 0, &mut rng)?;
    ep.send(from, phase, layer, kinds.points, points_to_bytes(&points))?;
    let frame = ep.expect(from, phase, kinds.pairs)?;
    let pairs = pairs_from_bytes(&frame.payload)?;
    if pairs.len() != choices.len() {
        return Err(Error::Protocol(format!(
            "OT batch for layer {layer}: {} choices but {} pairs",
            choices.len(),
            pairs.len()
        )));
    }
    Ok(unmask_pairs(receiver.keys(), choices, &pairs))
}
