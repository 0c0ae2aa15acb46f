#include <png.h>

#include <cstdio>
#include <set>

#include "doctest.h"
#include "embreg/slices.hpp"
#include "helpers.hpp"

using namespace embreg;

namespace {

// Decoded RGB8 image via libpng's simplified API.
RgbImage read_png(const std::filesystem::path& p) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    REQUIRE(png_image_begin_read_from_file(&img, p.c_str()));
    img.format = PNG_FORMAT_RGB;
    RgbImage out{static_cast<int>(img.width), static_cast<int>(img.height),
                 std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
    REQUIRE(png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr));
    return out;
}

}  // namespace

TEST_CASE("constant -1 slice is a black PNG") {
    const auto dir = testutil::scratch_dir("slices_black");
    Volume v(Dims{4, 6, 7});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0f;
    const auto paths = emit_slices({{"black", &v, nullptr}}, SliceAxis::Z, 2, dir);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0] == dir / "black.png");
    const RgbImage img = read_png(paths[0]);
    CHECK(img.width == 7);
    CHECK(img.height == 6);
    for (auto b : img.rgb) CHECK(b == 0);
}

TEST_CASE("gray mapping and geometry") {
    Volume v(Dims{3, 4, 5});
    for (int z = 0; z < 3; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 5; ++x) v(z, y, x) = static_cast<float>(z * 0.5 - 0.5 + 0.01 * y);
    CHECK(render_slice(v, nullptr, SliceAxis::Z, 0).pixel(0, 0)[0] == 64);
    CHECK(render_slice(v, nullptr, SliceAxis::Z, 2).pixel(0, 0)[0] == 191);
    const RgbImage y = render_slice(v, nullptr, SliceAxis::Y, 1);
    CHECK(y.height == 3);
    CHECK(y.width == 5);
    const RgbImage x = render_slice(v, nullptr, SliceAxis::X, 4);
    CHECK(x.height == 3);
    CHECK(x.width == 4);
    CHECK(x.pixel(1, 3)[1] == static_cast<std::uint8_t>(std::lround((0.03 + 1.0) / 2.0 * 255.0)));
}

TEST_CASE("slice index range") {
    const Volume v(Dims{4, 5, 6});
    CHECK_THROWS_AS(render_slice(v, nullptr, SliceAxis::Z, 4), std::out_of_range);
    CHECK_THROWS_AS(render_slice(v, nullptr, SliceAxis::Y, 5), std::out_of_range);
    CHECK_THROWS_AS(render_slice(v, nullptr, SliceAxis::X, -1), std::out_of_range);
    CHECK_NOTHROW(render_slice(v, nullptr, SliceAxis::X, 5));
    CHECK_THROWS_AS(parse_slice_axis("w"), std::invalid_argument);
}

TEST_CASE("square label contour") {
    const Dims d{1, 12, 12};
    Volume v(d);
    LabelVolume l(d);
    for (int y = 3; y < 9; ++y)
        for (int x = 2; x < 7; ++x) l(0, y, x) = 3;
    const RgbImage img = render_slice(v, &l, SliceAxis::Z, 0);
    std::set<std::pair<int, int>> boundary;
    for (int y = 3; y < 9; ++y)
        for (int x = 2; x < 7; ++x)
            if (y == 3 || y == 8 || x == 2 || x == 6) boundary.insert({y, x});
    const auto colour = label_colour(3);
    const std::array<std::uint8_t, 3> gray{128, 128, 128};
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) CHECK(img.pixel(y, x) == (boundary.count({y, x}) ? colour : gray));

    // a label touching the slice edge is outlined there too
    LabelVolume edge(d);
    for (int x = 0; x < 12; ++x) edge(0, 0, x) = 1;
    const RgbImage e = render_slice(v, &edge, SliceAxis::Z, 0);
    CHECK(e.pixel(0, 5) == label_colour(1));
    CHECK(label_colour(9) == label_colour(1));
}

TEST_CASE("output is deterministic") {
    const auto dir = testutil::scratch_dir("slices_det");
    const Volume v = testutil::smooth_volume(Dims{10, 10, 10});
    LabelVolume l(v.dims());
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = v[i] > 0.1f ? 2 : 0;
    emit_slices({{"a", &v, &l}}, SliceAxis::Y, 5, dir / "one");
    emit_slices({{"a", &v, &l}}, SliceAxis::Y, 5, dir / "two");
    CHECK(testutil::file_bytes(dir / "one" / "a.png") == testutil::file_bytes(dir / "two" / "a.png"));
    const RgbImage back = read_png(dir / "one" / "a.png");
    CHECK(back.rgb == render_slice(v, &l, SliceAxis::Y, 5).rgb);
}
