#ifndef DRIVER_H
#define DRIVER_H

int driver_init(void);

#ifdef CONFIG_USB
int usb_register(void);
#endif

#endif
