#include "mappings.hpp"

namespace happymap {

Mapping Mapping::parse(const std::string& text, double density_bound) {
    Mapping m;
    m.density_bound = density_bound;
    if (text == "residual") {
        m.id = MappingId::Residual;
        return m;
    }
    if (text == "parity") {
        m.id = MappingId::ParityExpected;
        return m;
    }
    if (text.rfind("quantile:", 0) == 0) {
        m.id = MappingId::Quantile;
        m.delta = decode_real(text.substr(9));
        if (!(m.delta > 0.0 && m.delta < 1.0))
            fail(ErrorCode::InvalidArgument, "quantile level must lie in (0,1)");
        if (!(m.density_bound > 0.0))
            fail(ErrorCode::InvalidArgument, "density bound must be positive");
        return m;
    }
    if (text.rfind("moment:", 0) == 0) {
        m.id = MappingId::RawMoment;
        const double kk = decode_real(text.substr(7));
        m.k = static_cast<int>(kk);
        if (m.k < 1 || static_cast<double>(m.k) != kk)
            fail(ErrorCode::InvalidArgument, "moment order must be an integer >= 1");
        return m;
    }
    fail(ErrorCode::InvalidArgument, "unknown mapping '" + text + "'");
}

std::string Mapping::to_string() const {
    switch (id) {
        case MappingId::Residual: return "residual";
        case MappingId::Quantile: return "quantile:" + format_real(delta);
        case MappingId::RawMoment: return "moment:" + std::to_string(k);
        case MappingId::ParityExpected: return "parity";
    }
    return "residual";
}

} // namespace happymap
