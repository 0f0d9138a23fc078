#include <stdio.h>

#if defined(CONFIG_DEBUG) && LOG_LEVEL > 2
#define TRACE(x) printf("%s\n", x)
#else
#define TRACE(x)
#endif

void util_trace(const char *msg)
{
	TRACE(msg);
	/*
#ifdef CONFIG_USB
	usb_trace(msg);
#endif
	*/
}
