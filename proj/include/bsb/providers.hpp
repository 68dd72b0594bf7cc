#pragma once

#include "bsb/types.hpp"

namespace bsb {

struct ProviderCapabilities {
    bool serial_only = false;  // callers must not issue concurrent queries
    bool memoizable = true;    // identical queries return identical masks
};

// Two-granularity answer of a promptable 2D segmenter for one pixel click.
struct Seg2DResult {
    Mask2D object;
    Mask2D part;
};

class Seg2DProvider {
public:
    virtual ~Seg2DProvider() = default;
    virtual Seg2DResult query(Pixel p) const = 0;
    virtual ProviderCapabilities capabilities() const { return {}; }
};

class Seg3DProvider {
public:
    virtual ~Seg3DProvider() = default;
    virtual Mask3D query(VertexId v) const = 0;
    virtual ProviderCapabilities capabilities() const { return {}; }
};

} // namespace bsb
