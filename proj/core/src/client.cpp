#include "esrt/client.hpp"

namespace esrt {

EdgeClient::EdgeClient(const EdgeModel& model, std::string host, uint16_t port)
    : model_(model), host_(std::move(host)), port_(port) {}

std::vector<TranslateResult> EdgeClient::translate(const AudioClip& clip,
                                                   const std::string& src_code,
                                                   const std::vector<std::string>& tgt_codes) {
    // resolve every language code before any connection is made
    const Vocabulary& vocab = Vocabulary::standard();
    vocab.language_id(src_code);
    for (const auto& code : tgt_codes) vocab.language_id(code);

    SocketChannel channel(TcpConn::connect(host_, port_));
    return translate_over(channel, clip, src_code, tgt_codes);
}

std::vector<TranslateResult> EdgeClient::translate_over(
    FrameChannel& raw_channel, const AudioClip& clip, const std::string& src_code,
    const std::vector<std::string>& tgt_codes) {
    const Vocabulary& vocab = Vocabulary::standard();
    const uint32_t src_id = vocab.language_id(src_code);
    std::vector<uint32_t> tgt_ids;
    tgt_ids.reserve(tgt_codes.size());
    for (const auto& code : tgt_codes) tgt_ids.push_back(vocab.language_id(code));

    CountingChannel channel(raw_channel, traffic_);

    const CompressedFeatures features = model_.encode(clip);
    const uint16_t k = static_cast<uint16_t>(features.k);
    const uint16_t d = static_cast<uint16_t>(features.d_q);

    std::vector<TranslateResult> results;
    bool features_sent = false;
    for (size_t i = 0; i < tgt_ids.size(); ++i) {
        // SRT instruction: "<|src|><|tgt|>"
        std::vector<uint32_t> prompt{src_id, tgt_ids[i]};

        if (!features_sent) {
            channel.send_frame(wire::encode_envelope(wire::make_features(
                features.cache_key, 1, k, d, features.z.data, prompt)));
            features_sent = true;
        } else {
            channel.send_frame(
                wire::encode_envelope(wire::make_cache_ref(features.cache_key, k, d, prompt)));
        }

        auto frame = channel.recv_frame();
        if (frame.empty()) throw NetError("server closed the connection");
        wire::Envelope reply = wire::decode_envelope(frame);

        if (reply.msg_type == wire::MsgType::NeedFeatures) {
            // server lost the entry; resend the payload once
            channel.send_frame(wire::encode_envelope(
                wire::make_features(features.cache_key, 1, k, d, features.z.data, {})));
            frame = channel.recv_frame();
            if (frame.empty()) throw NetError("server closed the connection after resend");
            reply = wire::decode_envelope(frame);
        }

        TranslateResult res;
        res.target_code = tgt_codes[i];
        res.response_text.assign(reply.payload.begin(), reply.payload.end());
        res.is_error = reply.msg_type == wire::MsgType::Error;
        if (reply.msg_type != wire::MsgType::Response &&
            reply.msg_type != wire::MsgType::Error) {
            throw NetError("unexpected reply msg_type " +
                           std::to_string(static_cast<int>(reply.msg_type)));
        }
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace esrt
