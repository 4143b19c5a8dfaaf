#pragma once

// Hot kernels get an AVX2 clone picked at load time. Contraction is disabled
// for the whole library (-ffp-contract=off), so both clones round identically.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define MEMECLIP_HOT __attribute__((target_clones("avx2", "default")))
#else
#define MEMECLIP_HOT
#endif
