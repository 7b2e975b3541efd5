#include "fieldseg/image.hpp"

#include "fieldseg/errors.hpp"

namespace fieldseg {

BoolImage threshold_mask(const DenseTensor& map, double threshold) {
    if (map.rank() != 2)
        throw DimensionError("threshold_mask expects a rank-2 map");
    BoolImage out(map.extent(0), map.extent(1));
    const double* p = map.data();
    for (std::size_t i = 0; i < map.size(); ++i) out.data[i] = p[i] > threshold ? 1 : 0;
    return out;
}

} // namespace fieldseg
