#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "cli_app.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training allocates many large, short-lived matrices. Keeping them on the
    // heap instead of fresh mmap regions avoids constant page faulting.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    std::vector<std::string> args(argv + 1, argv + argc);
    return gda4rec::cli::run(args, std::cout, std::cerr);
}
