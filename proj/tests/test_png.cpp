#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "egogan/png_io.hpp"
#include "egogan/rng.hpp"

using namespace egogan;
namespace fs = std::filesystem;

TEST_CASE("png round trip preserves pixels") {
    Rng rng(2);
    for (int channels : {1, 3}) {
        ImageU8 img(37, 53, channels);
        for (auto& p : img.pix) p = static_cast<u8>(rng.uniform_int(0, 255));
        const std::string path = (fs::temp_directory_path() / "egogan_png_test.png").string();
        write_png(path, img);
        ImageU8 back = read_png(path);
        CHECK(back.h == img.h);
        CHECK(back.w == img.w);
        CHECK(back.channels == channels);
        CHECK(back.pix == img.pix);
        fs::remove(path);
    }
}

TEST_CASE("png text chunks survive a round trip") {
    ImageU8 img(4, 4, 1);
    const std::string path = (fs::temp_directory_path() / "egogan_png_text.png").string();
    write_png(path, img, {{"provenance", "{\"seed\":7}"}});
    auto texts = read_png_texts(path);
    REQUIRE(texts.size() == 1);
    CHECK(texts[0].keyword == "provenance");
    CHECK(texts[0].text == "{\"seed\":7}");
    fs::remove(path);
}

TEST_CASE("png reader rejects garbage") {
    const std::string path = (fs::temp_directory_path() / "egogan_png_bad.png").string();
    {
        std::ofstream f(path, std::ios::binary);
        f << "not a png at all";
    }
    CHECK_THROWS_AS(read_png(path), IoError);
    CHECK_THROWS_AS(read_png("/nonexistent/missing.png"), IoError);
    fs::remove(path);
}

TEST_CASE("png writes are byte deterministic") {
    Rng rng(5);
    ImageU8 img(16, 16, 3);
    for (auto& p : img.pix) p = static_cast<u8>(rng.uniform_int(0, 255));
    const auto dir = fs::temp_directory_path();
    const std::string a = (dir / "egogan_det_a.png").string();
    const std::string b = (dir / "egogan_det_b.png").string();
    write_png(a, img);
    write_png(b, img);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
    fs::remove(a);
    fs::remove(b);
}
