#include "_convcore.h"

#define CAT2(a, b) a##b
#define CAT(a, b) CAT2(a, b)
#define FN(name) CAT(name, SUFFIX)

#define REAL float
#define SUFFIX _f32
#include "_convcore_impl.h"
#undef REAL
#undef SUFFIX

#define REAL double
#define SUFFIX _f64
#include "_convcore_impl.h"
#undef REAL
#undef SUFFIX
