/* driver core */
#include "driver.h"

static int probe_count;

#ifdef CONFIG_USB
static int usb_probe(void)
{
#if defined(CONFIG_USB_STORAGE)
	return 2;
#else
	return 1;
#endif
}
#endif

#if defined(CONFIG_NET) && !defined(CONFIG_DEBUG)
#define DRIVER_MODE 1
#elif defined(CONFIG_DEBUG)
#define DRIVER_MODE 2
#else
#define DRIVER_MODE 0
#endif

#ifndef CONFIG_CRYPTO
static const char *hash_name = "none";
#endif

int driver_init(void) { return probe_count + DRIVER_MODE; }
